use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length-scale must be positive and finite, got {0}")]
    NonPositiveLengthScale(f64),

    #[error("variance must be positive and finite, got {0}")]
    NonPositiveVariance(f64),

    #[error("unsupported Matérn smoothness nu = {0} (expected 0.5, 1.5 or 2.5)")]
    UnsupportedSmoothness(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Gram matrix is not positive definite (largest jitter tried: {jitter:e})")]
    Factorization { jitter: f64 },

    #[error("hyperparameter sampling failed: {0}")]
    Sampling(String),

    #[error("point outside domain: coordinate {index} = {value} not in [{lower}, {upper}]")]
    OutOfBounds { index: usize, value: f64, lower: f64, upper: f64 },

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
