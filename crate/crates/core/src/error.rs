use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("backward called without a matching forward: {0}")]
    Tape(String),

    #[error("parameter `{path}`: {msg}")]
    Param { path: String, msg: String },

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable class, used by the CLI error line.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Invalid(_) => "invalid",
            Error::NonFinite(_) => "numeric",
            Error::Tape(_) => "tape",
            Error::Param { .. } => "param",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}

macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::Invalid(format!($($arg)*)) };
}

pub(crate) use invalid;
pub(crate) use shape_err;
