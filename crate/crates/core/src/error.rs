use thiserror::Error;

/// Failures reported by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("volatility of regime {regime} must be positive and finite, got {value}")]
    NonPositiveVolatility { regime: usize, value: f64 },

    #[error("generator row {row} is invalid: {reason}")]
    BadGeneratorRow { row: usize, reason: String },

    #[error("horizon must be positive and finite, got {0}")]
    NonPositiveHorizon(f64),

    #[error("model shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite model coefficient: {0}")]
    NonFinite(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too coarse: max |q_jj| * dt = {coupling:.4} exceeds 0.5")]
    GridTooCoarse { coupling: f64 },

    #[error("stopping nodes at t-node {t_index}, regime {regime} are not an up-set in x")]
    NonMonotoneSlice { t_index: usize, regime: usize },

    #[error("check not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
