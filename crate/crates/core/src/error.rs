use thiserror::Error;

/// Crate-wide error type. CLI exit codes map onto the variants: validation
/// and domain problems are user errors, instability is a numerical failure,
/// the rest are I/O or internal.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The explicit scheme produced a non-finite or non-positive density.
    #[error("numerical instability at t = {time_s:.3} s ({location}): {what}")]
    Instability {
        time_s: f64,
        location: String,
        what: String,
    },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
