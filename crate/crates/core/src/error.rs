use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NonPositiveDefinite(String),

    #[error("finite-difference derivative did not stabilise: {0}")]
    DerivativeUnavailable(String),

    #[error("Hessian of the covariance at the origin is degenerate (det = {det:e})")]
    DegenerateHessian { det: f64 },

    #[error("covariance matrix over the grid is not positive semidefinite after jitter {jitter:e}")]
    EmbeddingFailure { jitter: f64 },

    #[error("b = {b} is below the asymptotic regime (minimum of the u-equation is {min:e})")]
    NoRoot { b: f64, min: f64 },

    #[error("mean function has no unique interior maximum: {0}")]
    NoInteriorMax(String),

    #[error("log importance weight {log_weight} is outside the floating-point range")]
    WeightOverflow { log_weight: f64 },

    #[error("cannot merge estimator results with different provenance")]
    MixedProvenance,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
