use thiserror::Error;

/// Errors raised by task construction, counting and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// The input document could not be parsed or has the wrong shape.
    #[error("malformed document: {0}")]
    Malformed(String),
    /// The input parsed but violates an invariant of the task model.
    #[error("{0}")]
    Validation(String),
    /// A search or enumeration exceeded its configured budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    /// An oracle was asked to run on a space above its size limit.
    #[error("space too large: {0}")]
    SpaceTooLarge(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
