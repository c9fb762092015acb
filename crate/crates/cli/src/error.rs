//! Error taxonomy mapped onto process exit codes: input problems exit 1,
//! pipeline failures exit 2.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed, or inconsistent inputs.
    #[error("input error: {0}")]
    Input(String),
    /// The pipeline ran on valid inputs but could not produce a result
    /// (e.g. an empty volume or point cloud).
    #[error("pipeline error: {0}")]
    Pipeline(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }

    pub fn pipeline(message: impl Into<String>) -> Self {
        CliError::Pipeline(message.into())
    }

    pub fn input_at(path: &Path, message: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}: {}", path.display(), message))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Pipeline(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
