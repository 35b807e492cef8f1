use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("gradient tape: {0}")]
    Tape(String),

    #[error("non-finite gradient in parameter {param}")]
    NonFiniteGradient { param: usize },

    #[error("{path}: {fault}")]
    Format { path: PathBuf, fault: FormatFault },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Specific faults detected while decoding binary files.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatFault {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing bytes after payload: {0}")]
    Trailing(u64),
    #[error("dimension overflow ({0} x {1})")]
    Overflow(u64, u64),
    #[error("zero-sized dimension")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("corrupt header: {0}")]
    Header(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
