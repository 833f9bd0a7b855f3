//! Online-softmax local attention over a run of KV tiles.
//!
//! [`lean_tile`] walks tile iterations `[iter_begin, iter_end)` of one
//! `(batch, head)` context and maintains, per query row, the running maximum
//! `m`, the running exp-sum `l`, and the *un-scaled* output accumulator
//! (not divided by `l`). Splitting the walk anywhere and merging the pieces
//! with [`crate::rescale::combine`] reproduces the single-pass result, which
//! is what makes arbitrary work decompositions exact.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;
use crate::problem::ProblemSpec;
use crate::rescale::neutral;
use crate::Result;

/// Tile granularity: query rows per output tile and KV tokens per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub tile_m: usize,
    pub tile_n: usize,
}

impl TileConfig {
    pub fn new(tile_m: usize, tile_n: usize) -> Result<Self> {
        if tile_m == 0 || tile_n == 0 {
            return Err(Error::InvalidArgument(format!(
                "tile sizes must be >= 1, got tile_m={tile_m} tile_n={tile_n}"
            )));
        }
        Ok(Self { tile_m, tile_n })
    }

    /// Default granularity: single query row (decode), 256-token KV tiles
    /// for head dim 64 and 128-token tiles for head dim 128 and above.
    pub fn for_head_dim(head_dim: usize) -> Self {
        let tile_n = if head_dim >= 128 { 128 } else { 256 };
        Self { tile_m: 1, tile_n }
    }
}

/// Un-scaled partial attention state for one output-tile fragment.
///
/// `o_unscaled` is `rows x head_dim` row-major; `row_max` and `row_sum` hold
/// the running `(m, l)` statistics per query row. `row_sum == 0` together
/// with `row_max == -inf` marks a row that has seen no tokens (the neutral
/// element of the re-scaling reduction).
#[derive(Debug, Clone, PartialEq)]
pub struct PartialState {
    pub o_unscaled: Vec<f32>,
    pub row_max: Vec<f32>,
    pub row_sum: Vec<f32>,
}

impl PartialState {
    pub fn rows(&self) -> usize {
        self.row_max.len()
    }

    pub fn head_dim(&self) -> usize {
        self.o_unscaled.len() / self.rows()
    }

    pub(crate) fn same_shape(&self, other: &PartialState) -> bool {
        self.o_unscaled.len() == other.o_unscaled.len()
            && self.row_max.len() == other.row_max.len()
            && self.row_sum.len() == other.row_sum.len()
    }
}

/// Runs the online-softmax accumulation over KV tile iterations
/// `[iter_begin, iter_end)`.
///
/// `q_tile` holds the query rows of one output tile (`rows x head_dim`,
/// `rows <= tile_m`); `k` and `v` are the full `(context_len x head_dim)`
/// planes of one `(batch, head)`. A final tile shorter than `tile_n` is
/// computed over its valid columns only, so no `-inf` padding enters the
/// arithmetic. The returned output accumulator is NOT divided by the
/// softmax denominator; see [`finalize`].
pub fn lean_tile(
    problem: &ProblemSpec,
    q_tile: &[f32],
    k: &[f32],
    v: &[f32],
    iter_begin: usize,
    iter_end: usize,
    cfg: &TileConfig,
) -> Result<PartialState> {
    let d = problem.head_dim;
    let ctx = problem.context_len;
    if q_tile.is_empty() || !q_tile.len().is_multiple_of(d) {
        return Err(Error::ShapeMismatch(format!(
            "query tile length {} is not a positive multiple of head_dim {d}",
            q_tile.len()
        )));
    }
    let rows = q_tile.len() / d;
    if rows > cfg.tile_m {
        return Err(Error::ShapeMismatch(format!(
            "query tile has {rows} rows but tile_m is {}",
            cfg.tile_m
        )));
    }
    if k.len() != ctx * d || v.len() != ctx * d {
        return Err(Error::ShapeMismatch(format!(
            "kv planes must be context_len*head_dim = {} elements, got k={} v={}",
            ctx * d,
            k.len(),
            v.len()
        )));
    }
    if iter_begin >= iter_end {
        return Err(Error::EmptyIterRange { begin: iter_begin, end: iter_end });
    }
    let iter_limit = ctx.div_ceil(cfg.tile_n);
    if iter_end > iter_limit {
        return Err(Error::IterOutOfRange { end: iter_end, limit: iter_limit });
    }

    let mut state = neutral(rows, d);
    let mut scores = vec![0.0f32; cfg.tile_n];
    for iter in iter_begin..iter_end {
        let col0 = iter * cfg.tile_n;
        let cols = cfg.tile_n.min(ctx - col0);
        for r in 0..rows {
            let q_row = &q_tile[r * d..(r + 1) * d];
            let mut tile_max = f32::NEG_INFINITY;
            for c in 0..cols {
                let k_row = &k[(col0 + c) * d..(col0 + c + 1) * d];
                let mut s = 0.0f32;
                for t in 0..d {
                    s += q_row[t] * k_row[t];
                }
                let s = s * problem.scale;
                scores[c] = s;
                tile_max = tile_max.max(s);
            }

            let m_old = state.row_max[r];
            let m_new = m_old.max(tile_max);
            // exp(-inf - finite) = 0 on the first iteration; o is still zero
            // there, so the rescale below is exact.
            let correction = math::exp32(m_old - m_new);
            let o_row = &mut state.o_unscaled[r * d..(r + 1) * d];
            for x in o_row.iter_mut() {
                *x *= correction;
            }
            let mut tile_sum = 0.0f32;
            for c in 0..cols {
                let p = math::exp32(scores[c] - m_new);
                tile_sum += p;
                let v_row = &v[(col0 + c) * d..(col0 + c + 1) * d];
                for t in 0..d {
                    o_row[t] += p * v_row[t];
                }
            }
            state.row_sum[r] = correction * state.row_sum[r] + tile_sum;
            state.row_max[r] = m_new;
        }
    }
    Ok(state)
}

/// Divides the accumulator by the softmax denominator and emits the per-row
/// logsumexp `m + log(l)`.
pub fn finalize(state: &PartialState) -> Result<(Vec<f32>, Vec<f32>)> {
    let rows = state.rows();
    let d = state.head_dim();
    let mut out = Vec::with_capacity(rows * d);
    let mut lse = Vec::with_capacity(rows);
    for r in 0..rows {
        let l = state.row_sum[r];
        if l <= 0.0 {
            return Err(Error::DegenerateState { row: r });
        }
        for t in 0..d {
            out.push(state.o_unscaled[r * d + t] / l);
        }
        lse.push(state.row_max[r] + math::ln32(l));
    }
    Ok((out, lse))
}
