//! Threaded runtime, file formats, and verification harness for the
//! exact-attention engine in `leanattn-core`.
//!
//! - [`executor`]: runs a schedule on a bounded thread pool; non-host
//!   workers publish un-scaled partials, host workers reduce and write.
//! - [`gen`]: seeded Gaussian tensor generation for tests and benchmarks.
//! - [`io`]: the little-endian golden tensor file format.
//! - [`verify`]: the property suite behind `leanattn verify`.
//! - [`sweep`]: config-file parsing and cell expansion for benchmark sweeps.

pub mod executor;
pub mod gen;
pub mod io;
pub mod sweep;
pub mod verify;

pub use executor::{
    execute, execute_ragged, execute_ragged_with, execute_with, ExecError, ExecOptions,
    RunReport, SegmentRole, SegmentTrace,
};
pub use leanattn_core::{
    AttentionOutput, DeviceTensor, ProblemSpec, RaggedBatchSpec, Schedule, Strategy, TileConfig,
};
