use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: row {row}: {message}")]
    Schema {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{0}: no records")]
    EmptyInput(PathBuf),

    #[error("{path}: row {row} has {found} landmarks, expected {expected}")]
    InconsistentCount {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("prediction/ground-truth mismatch: {0}")]
    CountMismatch(String),

    #[error(transparent)]
    Core(#[from] rrq_core::Error),
}

impl HarnessError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
