use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed response in column '{column}' at data row {row}: '{value}'")]
    MalformedResponse {
        column: String,
        row: usize,
        value: String,
    },

    #[error("malformed feature in column '{column}' at data row {row}: '{value}'")]
    MalformedFeature {
        column: String,
        row: usize,
        value: String,
    },

    #[error("duplicate column label '{0}'")]
    DuplicateColumn(String),

    #[error("column '{0}' not found")]
    MissingColumn(String),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sampler produced a non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("not a model file (expected format '{expected}', found '{found}')")]
    BadMagic { expected: String, found: String },

    #[error("unsupported model file version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
