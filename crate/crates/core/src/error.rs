use thiserror::Error;

/// Errors produced anywhere in the codec pipeline.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt data: {0}")]
    CorruptData(String),

    #[error("bad stream format: {0}")]
    Format(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("non-finite value in layer {layer}: {detail}")]
    Numeric { layer: usize, detail: String },

    #[error("training diverged at iteration {iteration}: {detail}")]
    Training { iteration: usize, detail: String },

    #[error("image i/o: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> CodecError {
    CodecError::InvalidArgument(msg.into())
}

pub(crate) fn corrupt(msg: impl Into<String>) -> CodecError {
    CodecError::CorruptData(msg.into())
}
