use thiserror::Error;

/// Errors raised by model construction, fitting and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, invalid hyperparameters, empty inputs.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A matrix lost positive definiteness or a term became non-finite.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input file content.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn num(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Short category label: `config`, `io`, `parse` or `numeric`.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Argument(_) => "config",
            Error::Numerical(_) => "numeric",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
