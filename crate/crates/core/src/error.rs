use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),
    #[error("site {site} is assigned to more than one role")]
    RoleOverlap { site: usize },
    #[error("{n_sites} sites exceeds the enumeration cap of {cap}")]
    CapExceeded { n_sites: usize, cap: usize },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("target and given constrain the same site {site}")]
    OverlappingConstraints { site: usize },
    #[error("lambda subset must be a non-empty subset of the hidden sites")]
    EmptyLambdaSubset,
    #[error("non-finite energy for configuration {index}")]
    NonFiniteEnergy { index: u64 },
    #[error("eigendecomposition did not converge")]
    Diagonalization,
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidMcConfig(String),
    #[error("grid of {points} points exceeds the budget of {budget}")]
    BudgetExceeded { points: usize, budget: usize },
    #[error("invalid search problem: {0}")]
    InvalidSearch(String),
    #[error("spec file: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
