//! Exact Bell-CHSH experiments on classical and quantum Ising lattices.
//!
//! A [`LatticeSpec`] describes the lattice and which sites act as outcomes,
//! settings and hidden variables. [`build_distribution`] enumerates every
//! configuration, after which the [`chsh`] and [`diagnostics`] modules read
//! correlators and independence deviations off the table. The
//! [`quantum`] module produces the same kind of table from a
//! transverse-field Hamiltonian, and [`mc`] samples the classical model.
//!
//! The exact engines are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the double-precision types used by the sampler, the
//! search drivers and the CLI.

pub mod chsh;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod gibbs;
pub mod lattice;
pub mod mc;
pub mod quantum;
pub mod scalar;
pub mod search;
pub mod specfile;

pub use chsh::{chsh, correlator, pairwise_correlations, ChshReport, Correlators, SignConvention};
pub use diagnostics::{diagnose, sweep_subsets, IndependenceReport};
pub use error::{Error, Result};
pub use gibbs::{build_distribution, DistributionSource, DistributionTable, PartialAssignment};
pub use lattice::{Edge, LatticeSpec, RoleAssignment, SpinConfiguration, ValidationReport, DEFAULT_ENUMERATION_CAP};
pub use mc::{clamped_run, conditional_chsh, metropolis_run, Estimate, McConfig, McRun};
pub use quantum::{QuantumModel, DEFAULT_QUANTUM_CAP};
pub use scalar::Scalar;

pub type Spec = LatticeSpec<f64>;
pub type Spec32 = LatticeSpec<f32>;
pub type Distribution = DistributionTable<f64>;
pub type Distribution32 = DistributionTable<f32>;
pub type Chsh = ChshReport<f64>;
pub type Independence = IndependenceReport<f64>;
pub type Quantum = QuantumModel<f64>;
