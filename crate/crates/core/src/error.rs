use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} is outside the domain of {op}")]
    Domain { op: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of bounds for side information of length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("context references pixel {pixel} which is not before the current pixel {cursor}")]
    NonCausal { pixel: usize, cursor: usize },

    #[error("context id {id} out of range for a context space of size {size}")]
    ContextOutOfRange { id: usize, size: usize },

    #[error("bad magic number {0:#010x}")]
    BadMagic(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("truncated header: {0}")]
    TruncatedHeader(&'static str),

    #[error("dimension product overflows: {0:?}")]
    DimensionOverflow(Vec<u32>),

    #[error("{found} unexpected trailing bytes after payload")]
    TrailingBytes { found: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported {what} version {found}")]
    UnsupportedVersion { what: &'static str, found: u32 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
