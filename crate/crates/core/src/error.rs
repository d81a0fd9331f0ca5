use thiserror::Error;

/// Crate-wide error type.
///
/// `InvalidParameter` covers precondition violations the caller can fix;
/// `Internal` flags inconsistencies that should be impossible for valid
/// inputs (failed cross-checks, lost brackets) and maps to a distinct
/// process exit code in the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("internal inconsistency: {0}")]
    Internal(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
