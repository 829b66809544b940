use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("index {index} out of range for {what} of size {size}")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown dataset `{name}` (known: {known})")]
    UnknownDataset { name: String, known: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;
