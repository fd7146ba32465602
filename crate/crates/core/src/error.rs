use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value lies outside the domain of the requested computation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model specification is inconsistent with the data or unidentified.
    #[error("specification error: {0}")]
    Specification(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("identification failure: {0}")]
    Identification(String),

    /// An estimator could not produce a usable result (e.g. too many
    /// imputations with separated outcomes).
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    /// Malformed input file; `line` is 1-based and counts the header row.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
