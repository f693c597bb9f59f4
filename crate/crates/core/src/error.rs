use thiserror::Error;

/// Errors produced by the estimation pipeline and its tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A configuration field failed validation. `field` is a dotted path such
    /// as `pipeline.v_lm`.
    #[error("{field}: {message}")]
    Validation { field: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The configuration file could not be parsed.
    #[error("config: {0}")]
    Config(String),

    #[error("empty measurement stream")]
    EmptyStream,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateGeometry(msg.into())
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl Error {
    /// Process exit status for this error: 2 for bad input or configuration,
    /// 3 for numerical trouble, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFailure(_) | Error::DegenerateGeometry(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
