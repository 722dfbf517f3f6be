use std::io;

use thiserror::Error;

/// Errors produced anywhere in the search pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic {
        expected: &'static str,
        found: Vec<u8>,
    },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(u64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("duplicate id {0}")]
    DuplicateId(u64),

    #[error("unknown id {0}")]
    UnknownId(u64),

    #[error("non-finite value in vector {id} at component {index}")]
    NonFinite { id: u64, index: usize },

    #[error("zero norm")]
    ZeroNorm,

    #[error("degenerate score set")]
    DegenerateScores,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("id sets differ between rankings")]
    IdSetMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("raw vectors are required but the index was built without them")]
    MissingRawVectors,

    #[error("code index {index} out of range for codebook of size {z}")]
    CodeOutOfRange { index: u32, z: usize },

    #[error("memory ceiling exceeded: need {needed} bytes, limit {limit}")]
    MemoryCeiling { needed: u64, limit: u64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
