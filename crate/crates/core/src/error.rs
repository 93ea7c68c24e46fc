use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular matrix in {context} (|det| = {det:e})")]
    Singular { context: String, det: f64 },

    #[error("degenerate tuple: summed matrix is singular (|det| = {det:e})")]
    DegenerateTuple { det: f64 },

    #[error("{what} guard exceeded: {count:e} > {limit:e}")]
    GuardExceeded {
        what: &'static str,
        count: f64,
        limit: f64,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
