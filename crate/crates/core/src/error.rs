use thiserror::Error;

/// Errors raised by the mixture algebra, the model primitives and the filters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("weights are all zero or non-finite")]
    DegenerateWeights,
    #[error("kernel mass {mass} exceeds one")]
    InvalidKernel { mass: f64 },
    #[error("every marginal likelihood is zero or non-finite")]
    ZeroLikelihood,
    #[error("dual parameter {theta} is below the lower bound {bound}")]
    InvalidDualParam { theta: f64, bound: f64 },
    #[error("simulation exceeded the budget of {budget} events")]
    SimulationBudgetExceeded { budget: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("point outside the state space: {0}")]
    DomainError(String),
    #[error("time grids are not aligned: {0}")]
    AlignmentError(String),
    #[error("unsupported for this model or method: {0}")]
    UnsupportedModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
