use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite kernel value at pair ({row}, {col})")]
    NonFiniteKernel { row: usize, col: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Numerical failures map to exit code 2, everything else to 1.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFiniteKernel { .. } | Error::NotPositiveDefinite(_) | Error::Degenerate(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
