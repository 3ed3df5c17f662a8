use thiserror::Error;

/// Errors raised by the reconstruction pipeline and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("mean shift did not converge after {restarts} restarts")]
    NoConvergence { restarts: usize },
    #[error("turntable detection failed: {0}")]
    DetectionFailed(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
