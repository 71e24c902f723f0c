use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum SgfdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A loss, gradient or objective became non-finite; the caller should abort the run
    /// (or fall back, for sample weights).
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient data: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SgfdError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SgfdError::InvalidArgument(msg.into()))
}
