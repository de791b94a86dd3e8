use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// A config key was unknown or its value did not parse or validate.
    #[error("config key '{key}': {message}")]
    Config { key: String, message: String },

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

    #[error("{path}: malformed file: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("runs are not comparable: {0}")]
    MismatchedGrids(String),

    #[error("reference solve failed: {0}")]
    Oracle(#[source] dlra::DlraError),

    #[error(transparent)]
    Core(#[from] dlra::DlraError),
}

impl HarnessError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        HarnessError::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Usage errors map to exit status 2, everything else to 1.
    pub fn is_usage(&self) -> bool {
        matches!(self, HarnessError::Config { .. } | HarnessError::MismatchedGrids(_))
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
