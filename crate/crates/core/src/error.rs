use thiserror::Error;

/// Errors produced by the solver, the sensitivity operators and the file readers.
#[derive(Debug, Error)]
pub enum EikonalError {
    /// An input violates a documented precondition (non-positive slowness,
    /// off-grid source, mismatched grids, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A condition the algorithms guarantee did not hold.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = EikonalError> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(EikonalError::Domain(msg.into()))
}
