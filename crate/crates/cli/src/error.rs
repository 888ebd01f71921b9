use std::path::PathBuf;

use pclm::PclmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] PclmError),

    #[error("no grid point converged")]
    NoConvergedPoint,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(PclmError::Resource { .. }) => exit::RESOURCE,
            CliError::Model(PclmError::Numerical { .. }) | CliError::NoConvergedPoint => exit::NOT_CONVERGED,
            CliError::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => 1,
            _ => exit::VALIDATION,
        }
    }
}

pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const RESOURCE: i32 = 4;
}

pub type Result<T> = std::result::Result<T, CliError>;
