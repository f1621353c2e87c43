use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bit count {len} is not a multiple of {bits_per_symbol} bits per symbol")]
    IndivisibleBitCount { len: usize, bits_per_symbol: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid shaping config: {0}")]
    InvalidShaping(String),

    #[error("invalid impairment profile: {0}")]
    InvalidProfile(String),

    #[error("invalid dataset split: {0}")]
    InvalidSplit(String),

    #[error("pixel index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("evaluation set is empty")]
    EmptySet,

    #[error("{0} free bits exceeds the exhaustive search limit of 20")]
    SubsetTooLarge(usize),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported {what} format version {found} (expected {expected})")]
    UnsupportedVersion { what: &'static str, expected: u32, found: u32 },

    #[error("truncated record {index}")]
    TruncatedRecord { index: usize },

    #[error("manifest lists {manifest} records but container holds {records}")]
    CountMismatch { manifest: usize, records: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for the failure class: 2 data/format, 3 numerical, 1 usage.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteLoss { .. } | Error::NonFiniteActivation(_) => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
