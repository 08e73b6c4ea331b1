use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("total mass must be positive (got {0})")]
    NonPositiveMass(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operation requires a {expected} grid, found {found}")]
    MetricKindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid state grid: {0}")]
    InvalidGrid(String),

    #[error("transportation solver failure: {0}")]
    SolverFailure(String),

    #[error("test function is not 1-Lipschitz (seminorm {0})")]
    NotOneLipschitz(f64),

    #[error("empty belief sample")]
    EmptySample,

    #[error("non-finite reward at state {state}, action {action}")]
    NonFiniteReward { state: usize, action: usize },

    #[error("drift constant {beta} is not below 1/alpha = {limit}; no contraction certificate")]
    DriftViolation { beta: f64, limit: f64 },

    #[error("observation node {node} has zero likelihood under the prior ({likelihood:e})")]
    ZeroLikelihood { node: usize, likelihood: f64 },

    #[error("value evaluation returned a non-finite number")]
    NonFiniteValue,

    #[error("no convergence within {iters} iterations (bound {bound:e})")]
    MaxItersExceeded { iters: usize, bound: f64 },

    #[error("grid too coarse: transition row ({state}, {action}) keeps only {mass:.4} of its mass")]
    GridTooCoarse {
        state: usize,
        action: usize,
        mass: f64,
    },

    #[error("drift derivation failed: measured {measured} exceeds chosen beta {beta}")]
    DriftDerivationFailed { measured: f64, beta: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonPositiveMass(_) => "NonPositiveMass",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::MetricKindMismatch { .. } => "MetricKindMismatch",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::SolverFailure(_) => "SolverFailure",
            Error::NotOneLipschitz(_) => "NotOneLipschitz",
            Error::EmptySample => "EmptySample",
            Error::NonFiniteReward { .. } => "NonFiniteReward",
            Error::DriftViolation { .. } => "DriftViolation",
            Error::ZeroLikelihood { .. } => "ZeroLikelihood",
            Error::NonFiniteValue => "NonFiniteValue",
            Error::MaxItersExceeded { .. } => "MaxItersExceeded",
            Error::GridTooCoarse { .. } => "GridTooCoarse",
            Error::DriftDerivationFailed { .. } => "DriftDerivationFailed",
            Error::InvalidModel(_) => "InvalidModel",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
