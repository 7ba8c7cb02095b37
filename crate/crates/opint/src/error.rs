use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// The integrand could not be evaluated at a required node.
    #[error("integrand not evaluable at {location}: {reason}")]
    NonEvaluable { location: f64, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A vector was used outside the domain a certificate grants.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("separating subspace is empty")]
    SeparatingSubspaceTooSmall,

    /// Eigendecomposition of an effect did not converge.
    #[error("decomposition failure: {0}")]
    DecompositionFailure(String),

    #[error("eigensolver failure: {0}")]
    EigSolverFailure(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("insufficient boundary data: {0}")]
    InsufficientBoundaryData(String),

    #[error("config error: {0}")]
    ConfigError(String),

    /// A scenario check violated its bound.
    #[error("scenario failure: {0}")]
    ScenarioFailure(String),

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("json failure: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
