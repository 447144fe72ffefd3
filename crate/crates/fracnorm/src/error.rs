use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (domain chains, plans, expressions, configs).
    #[error("validation error: {0}")]
    Validation(String),
    /// A geometric precondition was violated at runtime.
    #[error("domain error: {0}")]
    Domain(String),
    /// Meshing could not proceed (scale too large, disconnected interior, ...).
    #[error("meshing error: {0}")]
    Meshing(String),
    /// A numerical procedure failed (non-convergence, singular system).
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
