use thiserror::Error;

/// Errors raised by the tree, sampling and statistics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("value {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("grid index {index} out of range for resolution {resolution}")]
    IndexOutOfRange { index: usize, resolution: usize },

    #[error("point reference does not belong to this tree: {0}")]
    ForeignPoint(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("four-point condition violated by {violation:e} on leaves {quadruple:?}")]
    FourPointViolation { quadruple: [usize; 4], violation: f64 },

    #[error("degenerate reduced tree: {0}")]
    Degenerate(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
