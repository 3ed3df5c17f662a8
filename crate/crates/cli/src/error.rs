use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("turntable detection failed: {0}")]
    DetectionFailed(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("pipeline error: {0}")]
    Pipeline(revolve_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::DetectionFailed(_) => 3,
            CliError::Io(_) => 4,
            CliError::Pipeline(_) => 1,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<revolve_core::Error> for CliError {
    fn from(e: revolve_core::Error) -> Self {
        match e {
            revolve_core::Error::DetectionFailed(msg) => CliError::DetectionFailed(msg),
            revolve_core::Error::InvalidArgument(msg) => CliError::Config(msg),
            other => CliError::Pipeline(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
