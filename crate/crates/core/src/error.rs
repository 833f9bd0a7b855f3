//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors raised by problem construction, tiling, reduction, and scheduling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A problem or tile parameter violates its invariants.
    InvalidArgument(String),
    /// Tensor or state dimensions do not line up.
    ShapeMismatch(String),
    /// A tile subroutine was asked for zero iterations.
    EmptyIterRange { begin: usize, end: usize },
    /// A tile iteration index lies beyond the context.
    IterOutOfRange { end: usize, limit: usize },
    /// Finalizing a state with a zero softmax denominator (the neutral
    /// element, or a row that never saw a token).
    DegenerateState { row: usize },
    /// A ragged batch contains a zero-length context.
    EmptyContext { request: usize },
    /// The cumulative sequence-length array is inconsistent with the
    /// per-request context lengths.
    InvalidCumSeqLens(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::EmptyIterRange { begin, end } => {
                write!(f, "empty tile iteration range [{begin}, {end})")
            }
            Error::IterOutOfRange { end, limit } => {
                write!(f, "tile iteration end {end} exceeds context tile count {limit}")
            }
            Error::DegenerateState { row } => {
                write!(f, "cannot finalize degenerate state: row {row} has zero sum")
            }
            Error::EmptyContext { request } => {
                write!(f, "ragged batch request {request} has zero context length")
            }
            Error::InvalidCumSeqLens(msg) => {
                write!(f, "invalid cumulative sequence lengths: {msg}")
            }
        }
    }
}

impl core::error::Error for Error {}
