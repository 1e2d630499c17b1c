use std::path::PathBuf;

use thiserror::Error;

use crate::precision::Precision;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown operation '{0}'")]
    UnknownOperation(String),

    #[error("no kernel registered for '{op}' with signature {signature}")]
    UnknownKernel { op: String, signature: String },

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range for extent {extent}")]
    IndexOutOfRange { index: usize, extent: usize },

    #[error("operation '{0}' requires a matrix")]
    NotAMatrix(&'static str),

    #[error("operation '{0}' requires a non-empty array")]
    EmptyArray(&'static str),

    #[error("matrix is not positive definite (pivot column {column})")]
    NotPositiveDefinite { column: usize },

    #[error("matrix is singular (zero pivot at {index})")]
    SingularMatrix { index: usize },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("precision mismatch: {0}")]
    PrecisionMismatch(String),

    #[error("input precision {found} does not match kernel signature precision {expected}")]
    SignatureMismatch {
        expected: Precision,
        found: Precision,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("{path}: line {line}, column {column}: cannot parse '{token}' as a number")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        token: String,
    },

    #[error("{path}: line {line} has {found} fields, expected {expected}")]
    RaggedRows {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to usage or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::SingularMatrix { .. }
                | Error::NoConvergence { .. }
        )
    }
}
