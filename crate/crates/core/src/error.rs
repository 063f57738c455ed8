use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad magic {0:02x?}, expected \"OODT\"")]
    BadMagic([u8; 4]),

    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("unsupported tensor rank {0}, only 1-D and 2-D tensors are stored")]
    UnsupportedRank(u8),

    #[error("truncated tensor file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("{0} trailing bytes after tensor payload")]
    TrailingBytes(u64),

    #[error("tensor dimensions overflow the addressable size")]
    SizeOverflow,

    #[error("tensor dimension {axis} is zero")]
    ZeroDimension { axis: usize },

    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f32 },

    #[error("shape {shape:?} holds {expected} values but {found} were given")]
    ShapeMismatch {
        shape: Vec<u64>,
        expected: u64,
        found: usize,
    },

    #[error("expected {expected}, found {found}")]
    WrongKind {
        expected: &'static str,
        found: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: u32, classes: usize },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
