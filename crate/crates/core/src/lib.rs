//! Exact decode-phase attention, decomposed the lean way.
//!
//! The crate provides the algorithmic pieces needed to run exact attention
//! over a long cached context with arbitrary work splits:
//!
//! - [`oracle`]: a brute-force standard-attention reference that materializes
//!   the score and softmax matrices in 64-bit arithmetic. Ground truth for
//!   everything else.
//! - [`tile`]: the online-softmax subroutine that walks a contiguous run of
//!   KV tiles and produces an un-scaled partial output with running
//!   `(max, sum)` statistics.
//! - [`rescale`]: the softmax re-scaling operator that merges two partial
//!   states exactly. It is associative with a proper identity element, so it
//!   works as a reduction over arbitrary context splits.
//! - [`schedule`]: decomposition of the linearized tile-iteration space into
//!   per-worker assignments (stream-K, fixed-split, sequential), including
//!   ragged batches of unequal context lengths, plus occupancy analytics.
//!
//! Everything here is pure computation over caller-provided buffers; the
//! crate is `no_std`-compatible (with `alloc`). Threaded execution, file
//! formats, and the benchmark CLI live in the companion `leanattn` crate.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("leanattn-core requires either the `std` or the `libm` feature");

extern crate alloc;

mod math;
#[cfg(test)]
mod testutil;

pub mod error;
pub mod oracle;
pub mod problem;
pub mod rescale;
pub mod schedule;
pub mod tensor;
pub mod tile;

pub use error::Error;
pub use problem::ProblemSpec;
pub use rescale::{combine, combine_into, neutral};
pub use schedule::{
    linearize, linearize_ragged, schedule_fixed_split, schedule_fixed_split_ragged,
    schedule_sequential, schedule_sequential_ragged, schedule_stream_k, schedule_stream_k_ragged,
    RaggedBatchSpec, Ratio, Schedule, Segment, Strategy, TileEntry, TileTable,
};
pub use tensor::{AttentionOutput, DeviceTensor};
pub use tile::{finalize, lean_tile, PartialState, TileConfig};

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
