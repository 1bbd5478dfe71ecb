use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric error in layer {layer}: {message}")]
    Numeric { layer: usize, message: String },

    #[error("numeric error: {0}")]
    NonFinite(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("run error: {0}")]
    Run(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::Config(_) | CoreError::Scenario(_) => 1,
            CoreError::Io { .. } | CoreError::Format { .. } => 3,
            CoreError::Ingestion { .. } => 3,
            _ => 2,
        }
    }
}
