//! Crate-wide error type.
//!
//! Errors split into two categories that callers (notably the CLI) treat
//! differently: [`ErrorKind::Usage`] for caller mistakes (bad shapes, bad
//! arguments, bad config) and [`ErrorKind::Data`] for inputs that are
//! well-formed requests over degenerate or corrupt data.

use thiserror::Error;

/// Coarse classification of an [`Error`], used for exit-code mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller violated a precondition (wrong shape, invalid flag value).
    Usage,
    /// The data itself is degenerate or corrupt (zero norm, tied ranks, bad file).
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("empty vector")]
    EmptyVector,

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("degenerate rank vector: all scores tied")]
    DegenerateRanks,

    #[error("need at least {min} elements, got {got}")]
    TooFewElements { min: usize, got: usize },

    #[error("zero variance in {context}: correlation undefined")]
    ZeroVariance { context: String },

    #[error("sentence {id}: text empty after trimming")]
    EmptySentence { id: u64 },

    #[error("sentence id {id} not found in precomputed table")]
    UnknownSentence { id: u64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("k = {k} out of range [1, {n}]")]
    KOutOfRange { k: usize, n: usize },

    #[error("encoder fingerprint mismatch: index has {index:#018x}, encoder has {encoder:#018x}")]
    FingerprintMismatch { index: u64, encoder: u64 },

    #[error("{path}: {reason}")]
    LoadError { path: String, reason: String },

    #[error("{path} line {line}: {reason}")]
    LineError {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("corpus build failed: {0}")]
    BuildError(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Which broad category this error belongs to.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DimensionMismatch { .. }
            | Error::ShapeMismatch { .. }
            | Error::EmptyVector
            | Error::TooFewElements { .. }
            | Error::InvalidConfig(_)
            | Error::KOutOfRange { .. } => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
