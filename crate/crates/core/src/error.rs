use std::io;

use thiserror::Error;

/// Errors raised by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty volume: every axis must have length >= 1")]
    EmptyVolume,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("domain contract violated: expected {expected}, found {found}")]
    WrongDomain {
        expected: &'static str,
        found: &'static str,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid acquisition spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("non-finite loss at step {step}: {loss}")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("parameter store mismatch: {0}")]
    ParamMismatch(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Binary file format violations. Each variant is a distinct failure class.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("dimension overflow in header")]
    DimensionOverflow,
    #[error("malformed record: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
