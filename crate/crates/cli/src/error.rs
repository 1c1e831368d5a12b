use std::fmt::Display;
use std::path::Path;

/// Stage failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum StageError {
    /// Missing or unreadable input, bad configuration, missing operator choice.
    #[error("{0}")]
    Input(String),
    /// Inputs were read but failed validation, or upstream artifacts are stale.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl StageError {
    pub fn exit_code(&self) -> u8 {
        match self {
            StageError::Input(_) => 1,
            StageError::Validation(_) => 2,
            StageError::Internal(_) => 3,
        }
    }

    pub fn input(msg: impl Display) -> Self {
        StageError::Input(msg.to_string())
    }

    pub fn validation(msg: impl Display) -> Self {
        StageError::Validation(msg.to_string())
    }

    pub fn internal(msg: impl Display) -> Self {
        StageError::Internal(msg.to_string())
    }

    pub fn missing(path: &Path) -> Self {
        StageError::Input(format!("missing input {}", path.display()))
    }
}

pub type StageResult<T> = Result<T, StageError>;
