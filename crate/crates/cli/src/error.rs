//! CLI failures and their exit codes.

use std::path::PathBuf;

/// Exit codes: 0 ok, 1 failed check, 2 usage or parse, 3 numerical
/// infinity, 4 training failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] csib_core::Error),

    #[error("result is infinite: {0}")]
    Infinite(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::CheckFailed(_) => 1,
            Self::Usage(_) | Self::Parse { .. } | Self::Io { .. } | Self::Core(_) => 2,
            Self::Infinite(_) => 3,
            Self::Training(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
