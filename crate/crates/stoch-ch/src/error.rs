use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Integration or field arithmetic produced NaN/inf. `t` is the time at
    /// which the breakdown was detected (0 for time-independent contexts).
    #[error("non-finite values in {context} at t = {t}")]
    NonFinite { context: String, t: f64 },

    /// A coefficient field failed the spectral-tail smoothness gate.
    #[error("field not resolved at this grid: {0}")]
    NotSmooth(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}
