//! Attention problem descriptor.

use alloc::format;

use crate::error::Error;
use crate::math;
use crate::Result;

/// Shape and scaling of one attention problem.
///
/// Queries are `(batch, heads, query_len, head_dim)`; keys and values are
/// `(batch, heads, context_len, head_dim)`. In the decode phase
/// `query_len == 1` and the context is the full KV cache.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub batch: usize,
    pub heads: usize,
    pub query_len: usize,
    pub context_len: usize,
    pub head_dim: usize,
    /// Multiplier applied to every raw score before the softmax.
    pub scale: f32,
}

impl ProblemSpec {
    /// Builds a spec with the conventional `1/sqrt(head_dim)` score scale.
    pub fn new(
        batch: usize,
        heads: usize,
        query_len: usize,
        context_len: usize,
        head_dim: usize,
    ) -> Result<Self> {
        let scale = (1.0 / math::sqrt64(head_dim as f64)) as f32;
        Self::with_scale(batch, heads, query_len, context_len, head_dim, scale)
    }

    /// Builds a spec with an explicit score scale.
    pub fn with_scale(
        batch: usize,
        heads: usize,
        query_len: usize,
        context_len: usize,
        head_dim: usize,
        scale: f32,
    ) -> Result<Self> {
        for (name, v) in [
            ("batch", batch),
            ("heads", heads),
            ("query_len", query_len),
            ("context_len", context_len),
            ("head_dim", head_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "scale must be a positive finite real, got {scale}"
            )));
        }
        Ok(Self { batch, heads, query_len, context_len, head_dim, scale })
    }

    /// Dims of the query tensor.
    pub fn query_dims(&self) -> [usize; 4] {
        [self.batch, self.heads, self.query_len, self.head_dim]
    }

    /// Dims of the key and value tensors.
    pub fn kv_dims(&self) -> [usize; 4] {
        [self.batch, self.heads, self.context_len, self.head_dim]
    }
}
