use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SsdaError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SsdaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SsdaError::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, SsdaError::Config(_) | SsdaError::Parse { .. } | SsdaError::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, SsdaError>;
