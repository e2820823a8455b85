use std::io;

use thiserror::Error;

pub type Result<T, E = QflError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QflError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unresolved parameter `{0}`")]
    UnresolvedParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown gate `{name}` at line {line}")]
    UnknownGate { line: usize, name: String },

    #[error("dataset corrupted: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found} (max supported {supported})")]
    Version { found: u32, supported: u32 },

    #[error("training error: {0}")]
    Training(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl QflError {
    pub fn config(msg: impl Into<String>) -> Self {
        QflError::Config(msg.into())
    }

    pub fn training(msg: impl Into<String>) -> Self {
        QflError::Training(msg.into())
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            QflError::Config(_) => 2,
            QflError::Io(_)
            | QflError::Parse { .. }
            | QflError::UnknownGate { .. }
            | QflError::Corrupt(_)
            | QflError::Version { .. } => 3,
            QflError::Training(_)
            | QflError::UnresolvedParameter(_)
            | QflError::Protocol(_)
            | QflError::Internal(_) => 4,
        }
    }
}
