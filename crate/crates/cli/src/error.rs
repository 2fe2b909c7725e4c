use std::path::Path;

use thiserror::Error;

/// Everything that can stop a run, each with its process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::BadArgs(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<qd_core::Error> for CliError {
    fn from(e: qd_core::Error) -> Self {
        match e {
            qd_core::Error::Domain(_) | qd_core::Error::Resource(_) => CliError::BadArgs(e.to_string()),
            qd_core::Error::Numeric { .. } | qd_core::Error::Step { .. } => CliError::Numeric(e.to_string()),
        }
    }
}
