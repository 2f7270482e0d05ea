use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the pipeline. Each variant maps onto one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("data corruption in {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("degraded mode: {0}")]
    Degraded(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for this error: 2 configuration, 3 corruption, 4 degraded.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Corrupt { .. } => 3,
            Error::Degraded(_) => 4,
            Error::Contract(_) | Error::NonFinite(_) | Error::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
