use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the exgl library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid group allocation: {0}")]
    InvalidGroups(String),

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("matrix is not positive definite ({context}); pivot {pivot} = {value:e}")]
    NotPositiveDefinite {
        context: String,
        pivot: usize,
        value: f64,
    },

    #[error(
        "bisection bracket [{lo}, {hi}] does not contain the fixed point \
         (residual at lo = {residual_lo:e}, at hi = {residual_hi:e}); widen the bracket"
    )]
    BracketFailure {
        lo: f64,
        hi: f64,
        residual_lo: f64,
        residual_hi: f64,
    },

    #[error("covariance construction failed: {0}")]
    Covariance(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
