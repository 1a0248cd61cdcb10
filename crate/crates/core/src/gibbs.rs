//! Exact Boltzmann distributions over all `2^N` configurations, with
//! marginal and conditional queries.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::scalar::{pairwise_sum, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistributionSource {
    ClassicalBoltzmann,
    QuantumThermalDiagonal,
    QuantumGroundDiagonal,
}

/// Probability mass over every configuration, indexed by configuration index.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionTable<T> {
    n_sites: usize,
    probs: Vec<T>,
    log_z: T,
    source: DistributionSource,
}

/// Exact Boltzmann distribution `P(θ) = exp(-βH(θ)) / Z`.
///
/// Weights are taken relative to the minimum energy so that `exp` never
/// overflows, and `log Z` is restored from the shift.
pub fn build_distribution<T: Scalar>(spec: &LatticeSpec<T>, cap: usize) -> Result<DistributionTable<T>> {
    let n = spec.n_sites();
    if n > cap {
        return Err(Error::CapExceeded { n_sites: n, cap });
    }
    let energies: Vec<T> = (0..1u64 << n).into_par_iter().map(|i| spec.energy_of_index(i)).collect();
    if let Some(index) = energies.iter().position(|e| !e.is_finite()) {
        return Err(Error::NonFiniteEnergy { index: index as u64 });
    }
    let e_min = energies.iter().copied().fold(T::infinity(), T::min);
    let beta = spec.beta();
    let weights: Vec<T> = energies.par_iter().map(|&e| (-beta * (e - e_min)).exp()).collect();
    let total = pairwise_sum(&weights);
    let log_z = total.ln() - beta * e_min;
    let probs = weights.into_par_iter().map(|w| w / total).collect();
    Ok(DistributionTable { n_sites: n, probs, log_z, source: DistributionSource::ClassicalBoltzmann })
}

impl<T: Scalar> DistributionTable<T> {
    /// Wraps externally computed weights, normalising them.
    pub fn from_weights(n_sites: usize, weights: Vec<T>, log_z: T, source: DistributionSource) -> Result<Self> {
        if weights.len() as u64 != 1u64 << n_sites {
            return Err(Error::InvalidAssignment(format!("{} weights for {n_sites} sites", weights.len())));
        }
        if let Some(index) = weights.iter().position(|w| !(w.is_finite() && *w >= T::zero())) {
            return Err(Error::NonFiniteEnergy { index: index as u64 });
        }
        let total = pairwise_sum(&weights);
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { n_sites, probs, log_z, source })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn prob(&self, index: u64) -> T {
        self.probs[index as usize]
    }

    pub fn log_z(&self) -> T {
        self.log_z
    }

    pub fn partition_function(&self) -> T {
        self.log_z.exp()
    }

    pub fn source(&self) -> DistributionSource {
        self.source
    }

    /// Probability that every constraint in `eta` holds.
    ///
    /// Summation runs over the matching indices in ascending order through
    /// [`pairwise_sum`], the same reduction used by [`Self::project`].
    pub fn marginal(&self, eta: &PartialAssignment) -> Result<T> {
        let (mask, pattern) = eta.mask_pattern(self.n_sites)?;
        Ok(self.sum_matching(mask, pattern))
    }

    /// `P(target | given)`. The two assignments must constrain disjoint sites.
    pub fn conditional(&self, target: &PartialAssignment, given: &PartialAssignment) -> Result<T> {
        if let Some(&site) = target.constraints.keys().find(|s| given.constraints.contains_key(s)) {
            return Err(Error::OverlappingConstraints { site });
        }
        let joint = target.union(given);
        Ok(self.marginal(&joint)? / self.marginal(given)?)
    }

    fn sum_matching(&self, mask: u64, pattern: u64) -> T {
        let free = !mask & ((1u64 << self.n_sites) - 1);
        let terms: Vec<T> = SubmaskIter::new(free).map(|f| self.probs[(f | pattern) as usize]).collect();
        pairwise_sum(&terms)
    }

    /// Joint distribution of `sites`: entry `k` is the probability that site
    /// `sites[j]` is up exactly when bit `j` of `k` is set.
    pub fn project(&self, sites: &[usize]) -> Result<Vec<T>> {
        let mut mask = 0u64;
        for &s in sites {
            if s >= self.n_sites || mask & (1 << s) != 0 {
                return Err(Error::InvalidAssignment(format!("bad projection site {s}")));
            }
            mask |= 1 << s;
        }
        Ok((0..1u64 << sites.len())
            .into_par_iter()
            .map(|k| {
                let pattern = sites
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| (k >> j) & 1 == 1)
                    .fold(0u64, |acc, (_, &s)| acc | (1 << s));
                self.sum_matching(mask, pattern)
            })
            .collect())
    }

    /// Sum of all probabilities, for normalisation checks.
    pub fn total(&self) -> T {
        pairwise_sum(&self.probs)
    }
}

/// Ascending enumeration of every submask of `mask`, including 0.
struct SubmaskIter {
    mask: u64,
    next: Option<u64>,
}

impl SubmaskIter {
    fn new(mask: u64) -> Self {
        Self { mask, next: Some(0) }
    }
}

impl Iterator for SubmaskIter {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let cur = self.next?;
        // increment within the bits of mask
        let succ = (cur | !self.mask).wrapping_add(1) & self.mask;
        self.next = if succ == 0 { None } else { Some(succ) };
        Some(cur)
    }
}

/// Spin values fixed on a subset of sites.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialAssignment {
    constraints: BTreeMap<usize, i8>,
}

impl PartialAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(usize, i8)]) -> Result<Self> {
        let mut out = Self::new();
        for &(site, value) in pairs {
            if value != 1 && value != -1 {
                return Err(Error::InvalidAssignment(format!("spin {value} at site {site}")));
            }
            if out.constraints.insert(site, value).is_some() {
                return Err(Error::InvalidAssignment(format!("site {site} constrained twice")));
            }
        }
        Ok(out)
    }

    pub fn with(mut self, site: usize, value: i8) -> Result<Self> {
        if value != 1 && value != -1 {
            return Err(Error::InvalidAssignment(format!("spin {value} at site {site}")));
        }
        if self.constraints.insert(site, value).is_some() {
            return Err(Error::InvalidAssignment(format!("site {site} constrained twice")));
        }
        Ok(self)
    }

    pub fn constraints(&self) -> &BTreeMap<usize, i8> {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    fn union(&self, other: &Self) -> Self {
        let mut constraints = self.constraints.clone();
        constraints.extend(other.constraints.iter().map(|(&k, &v)| (k, v)));
        Self { constraints }
    }

    fn mask_pattern(&self, n_sites: usize) -> Result<(u64, u64)> {
        let mut mask = 0u64;
        let mut pattern = 0u64;
        for (&site, &value) in &self.constraints {
            if site >= n_sites {
                return Err(Error::InvalidAssignment(format!("site {site} outside lattice")));
            }
            mask |= 1 << site;
            if value > 0 {
                pattern |= 1 << site;
            }
        }
        Ok((mask, pattern))
    }
}
