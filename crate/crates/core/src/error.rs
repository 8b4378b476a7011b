use thiserror::Error;

/// Error type shared by every module in the crate.
///
/// `Validation` covers rejected inputs (violated preconditions, malformed
/// configuration); `Numeric` covers failures that arise during computation
/// (overflow, non-finite state, lost convergence). The CLI maps these to
/// exit codes 2 and 3 respectively.
#[derive(Debug, Error)]
pub enum SalError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl SalError {
    pub fn validation(msg: impl Into<String>) -> Self {
        SalError::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        SalError::Numeric(msg.into())
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, SalError::Validation(_))
    }
}

pub type Result<T> = std::result::Result<T, SalError>;
