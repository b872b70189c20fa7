use std::io;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid model file: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unclassifiable line")]
    Unclassifiable,

    #[error("unrepresentable word: {0}")]
    Unrepresentable(String),

    #[error("word contains a reserved boundary marker: {0}")]
    ReservedMarker(String),

    #[error("no context")]
    NoContext,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("unknown word: {0}")]
    UnknownWord(String),

    #[error("unknown preset: {0}")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
