//! Maps every error to one of the documented process exit codes.

use std::fmt;
use std::process::ExitCode;

use inr_codec::CodecError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_TRAINING: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, arguments or configuration.
    Usage(String),
    /// Unreadable or invalid input files and streams.
    Data(anyhow::Error),
    /// Training produced non-finite values.
    Training(String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Data(_) => EXIT_DATA,
            Self::Training(_) => EXIT_TRAINING,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Data(e) => write!(f, "data error: {e:#}"),
            Self::Training(m) => write!(f, "training failure: {m}"),
        }
    }
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Training { .. } | CodecError::Numeric { .. } => Self::Training(e.to_string()),
            other => Self::Data(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<CodecError>() {
            Ok(codec) => codec.into(),
            Err(e) => Self::Data(e),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;
