use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the estimation, tuning and I/O routines.
#[derive(Debug, Error)]
pub enum R4Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },
}

impl R4Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        R4Error::InvalidInput(msg.into())
    }

    /// Stable machine-readable reason code, used by the CLI.
    pub fn reason_code(&self) -> &'static str {
        match self {
            R4Error::InvalidInput(_) | R4Error::Parse { .. } => "invalid_input",
            R4Error::NotPositiveDefinite { .. } => "not_positive_definite",
            R4Error::Numerical(_) => "numerical_failure",
            R4Error::Infeasible(_) => "infeasible",
            R4Error::Io { .. } => "io_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, R4Error>;
