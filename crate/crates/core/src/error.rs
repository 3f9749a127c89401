use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch { expected: usize, found: usize },
    NonFinite { context: &'static str },
    EmptyInput(&'static str),
    InvalidConfig(String),
    InvalidEmbedding(String),
    DuplicateId(String),
    NotSquare { rows: usize, cols: usize },
    TileTooSmall { rows: usize, cols: usize },
    InsufficientData { needed: usize, available: usize },
    PoolSizeMismatch { src: usize, tgt: usize },
    NonBijectiveGold(String),
    MissingTokenCounts { pair_id: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidEmbedding(msg) => write!(f, "invalid embedding: {msg}"),
            Error::DuplicateId(id) => write!(f, "duplicate sentence id {id:?}"),
            Error::NotSquare { rows, cols } => {
                write!(f, "expected a square tile, got {rows}x{cols}")
            }
            Error::TileTooSmall { rows, cols } => write!(
                f,
                "normalization tile {rows}x{cols} is smaller than 2 in some dimension"
            ),
            Error::InsufficientData { needed, available } => {
                write!(f, "need at least {needed} items, got {available}")
            }
            Error::PoolSizeMismatch { src, tgt } => {
                write!(f, "pool size mismatch: {src} sources vs {tgt} targets")
            }
            Error::NonBijectiveGold(msg) => write!(f, "gold alignment is not a bijection: {msg}"),
            Error::MissingTokenCounts { pair_id } => write!(
                f,
                "pair {pair_id:?} has no token counts and no fallback counter is configured"
            ),
        }
    }
}

impl core::error::Error for Error {}
