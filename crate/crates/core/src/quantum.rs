//! Transverse-field Ising model on the lattice's bonds, solved by dense
//! exact diagonalization.
//!
//! ```text
//! H = -J Σ_<ij> Z_i Z_j - hJ Σ_i X_i  [- Σ_i g_i Z_i]
//! ```
//!
//! The bracketed longitudinal term is off unless requested with
//! [`QuantumModel::with_longitudinal_fields`]. Measurement is a simultaneous
//! `Z` readout of every site, so the resulting distribution is the diagonal of
//! the density matrix in the computational basis and plugs straight into
//! the classical analysis.

use nalgebra::{DMatrix, DVector, RealField, SymmetricEigen};
use num_traits::Float;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{DistributionSource, DistributionTable};
use crate::lattice::{spin_at, LatticeSpec};
use crate::scalar::Scalar;

/// Largest lattice the dense solver accepts unless told otherwise.
pub const DEFAULT_QUANTUM_CAP: usize = 12;

/// Iteration limit handed to the QR solver before reporting non-convergence.
const MAX_QR_ITERATIONS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumModel<T> {
    spec: LatticeSpec<T>,
    coupling: T,
    transverse: T,
    beta: T,
    longitudinal: Vec<T>,
}

impl<T: Scalar + RealField> QuantumModel<T> {
    /// Uses the bonds of `spec`; its couplings and fields are ignored.
    pub fn new(spec: LatticeSpec<T>, coupling: T, transverse: T, beta: T, cap: usize) -> Result<Self> {
        let n = spec.n_sites();
        if n > cap {
            return Err(Error::CapExceeded { n_sites: n, cap });
        }
        if !(Float::is_finite(beta) && beta > T::zero()) {
            return Err(Error::InvalidSpec(format!("beta must be positive and finite, got {beta}")));
        }
        if !Float::is_finite(coupling) || !Float::is_finite(transverse) {
            return Err(Error::InvalidSpec("quantum couplings must be finite".into()));
        }
        Ok(Self { longitudinal: vec![T::zero(); n], spec, coupling, transverse, beta })
    }

    /// Adds `-Σ g_i Z_i` with `g_i` taken from the spec's per-site fields.
    pub fn with_longitudinal_fields(mut self) -> Self {
        self.longitudinal = self.spec.fields().to_vec();
        self
    }

    pub fn spec(&self) -> &LatticeSpec<T> {
        &self.spec
    }

    pub fn coupling(&self) -> T {
        self.coupling
    }

    pub fn transverse(&self) -> T {
        self.transverse
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn longitudinal(&self) -> &[T] {
        &self.longitudinal
    }

    pub fn dimension(&self) -> usize {
        1 << self.spec.n_sites()
    }

    /// Diagonal of `H` in the computational basis.
    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dimension() as u64)
            .into_par_iter()
            .map(|idx| {
                let bonds = self
                    .spec
                    .edges()
                    .iter()
                    .fold(T::zero(), |acc, e| acc - self.coupling * T::spin(spin_at(idx, e.i) * spin_at(idx, e.j)));
                self.longitudinal
                    .iter()
                    .enumerate()
                    .fold(bonds, |acc, (site, &g)| acc - g * T::spin(spin_at(idx, site)))
            })
            .collect()
    }

    /// Dense real symmetric Hamiltonian.
    pub fn build_hamiltonian(&self) -> DMatrix<T> {
        let dim = self.dimension();
        let mut h = DMatrix::from_diagonal(&DVector::from_vec(self.diagonal()));
        let off = -(self.transverse * self.coupling);
        for idx in 0..dim {
            for site in 0..self.spec.n_sites() {
                h[(idx ^ (1 << site), idx)] = off;
            }
        }
        h
    }

    pub fn eigen(&self) -> Result<Spectrum<T>> {
        let h = self.build_hamiltonian();
        let eig =
            SymmetricEigen::try_new(h, <T as Float>::epsilon(), MAX_QR_ITERATIONS).ok_or(Error::Diagonalization)?;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite eigenvalues"));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = eig.eigenvectors.select_columns(&order);
        Ok(Spectrum { values, vectors })
    }

    /// `P(θ) = <θ| exp(-βH) |θ> / Tr exp(-βH)`.
    pub fn thermal_z_distribution(&self) -> Result<DistributionTable<T>> {
        let spectrum = self.eigen()?;
        let e0 = spectrum.values[0];
        let boltz: Vec<T> = spectrum.values.iter().map(|&e| Float::exp(-self.beta * (e - e0))).collect();
        let trace = boltz.iter().fold(T::zero(), |acc, &w| acc + w);
        let log_z = Float::ln(trace) - self.beta * e0;
        let weights = spectrum.diagonal_weights(&boltz);
        DistributionTable::from_weights(self.spec.n_sites(), weights, log_z, DistributionSource::QuantumThermalDiagonal)
    }

    /// `Z`-basis distribution of the ground state, averaged uniformly over a
    /// degenerate ground space (the `β → ∞` limit of the thermal state).
    pub fn ground_z_distribution(&self) -> Result<DistributionTable<T>> {
        let spectrum = self.eigen()?;
        let e0 = spectrum.values[0];
        let tol = T::lit(1e-9) * Float::max(T::one(), Float::abs(e0));
        let boltz: Vec<T> = spectrum.values.iter().map(|&e| if e - e0 <= tol { T::one() } else { T::zero() }).collect();
        let weights = spectrum.diagonal_weights(&boltz);
        let degeneracy = boltz.iter().fold(T::zero(), |acc, &w| acc + w);
        DistributionTable::from_weights(
            self.spec.n_sites(),
            weights,
            Float::ln(degeneracy),
            DistributionSource::QuantumGroundDiagonal,
        )
    }
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct Spectrum<T: Scalar + RealField> {
    pub values: Vec<T>,
    pub vectors: DMatrix<T>,
}

impl<T: Scalar + RealField> Spectrum<T> {
    /// `Σ_k |<θ|k>|² w_k` for every basis state θ.
    fn diagonal_weights(&self, w: &[T]) -> Vec<T> {
        let dim = self.vectors.nrows();
        (0..dim)
            .into_par_iter()
            .map(|row| {
                w.iter().enumerate().fold(T::zero(), |acc, (k, &wk)| {
                    let v = self.vectors[(row, k)];
                    acc + v * v * wk
                })
            })
            .collect()
    }
}
