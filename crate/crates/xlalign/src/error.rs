use std::io;

use thiserror::Error;

/// Failures while reading or writing the on-disk formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated record {index}")]
    TruncatedRecord { index: u64 },
    #[error("record {index}: id is not valid UTF-8")]
    InvalidId { index: u64 },
    #[error("record {index}: non-finite value")]
    NonFinite { index: u64 },
    #[error("{count} trailing bytes after the last record")]
    TrailingBytes { count: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] xlalign_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;
