//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a contract (overlong sequence, misaligned corpus, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An id fell outside the vocabulary.
    #[error("id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: u32, size: usize },

    /// A persisted file (vocabulary, checkpoint, log) is malformed.
    #[error("malformed {kind} file: {detail}")]
    MalformedFile { kind: &'static str, detail: String },

    /// Training diverged (NaN/Inf loss or gradient).
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
