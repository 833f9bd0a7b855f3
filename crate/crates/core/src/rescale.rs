//! The softmax re-scaling reduction operator.
//!
//! Two un-scaled partial states `x`, `y` summarizing disjoint KV spans of
//! the same query tile merge exactly:
//!
//! ```text
//! m = max(m_x, m_y)
//! l = exp(m_x - m) * l_x + exp(m_y - m) * l_y
//! o = exp(m_x - m) * o_x + exp(m_y - m) * o_y
//! ```
//!
//! The operator is associative and has [`neutral`] as identity, so a context
//! split into arbitrary, unequal pieces reduces to the same attention output
//! as a single pass. Rows with `l == 0` are handled by branching rather than
//! by evaluating `exp(-inf - -inf)`, keeping the identity law bitwise.

use alloc::format;
use alloc::vec;

use crate::error::Error;
use crate::math;
use crate::tile::PartialState;
use crate::Result;

/// The identity element: zero output, `m = -inf`, `l = 0` for every row.
pub fn neutral(tile_m: usize, head_dim: usize) -> PartialState {
    PartialState {
        o_unscaled: vec![0.0; tile_m * head_dim],
        row_max: vec![f32::NEG_INFINITY; tile_m],
        row_sum: vec![0.0; tile_m],
    }
}

/// Merges two partial states into a fresh one.
pub fn combine(x: &PartialState, y: &PartialState) -> Result<PartialState> {
    let mut out = x.clone();
    combine_into(&mut out, y)?;
    Ok(out)
}

/// In-place variant used by the executor's reduction loop: folds `other`
/// into `acc`.
pub fn combine_into(acc: &mut PartialState, other: &PartialState) -> Result<()> {
    if !acc.same_shape(other) {
        return Err(Error::ShapeMismatch(format!(
            "cannot combine states of {} rows x {} dims and {} rows x {} dims",
            acc.rows(),
            acc.head_dim(),
            other.rows(),
            other.head_dim()
        )));
    }
    let d = acc.head_dim();
    for r in 0..acc.rows() {
        if other.row_sum[r] == 0.0 {
            continue;
        }
        if acc.row_sum[r] == 0.0 {
            acc.row_max[r] = other.row_max[r];
            acc.row_sum[r] = other.row_sum[r];
            acc.o_unscaled[r * d..(r + 1) * d]
                .copy_from_slice(&other.o_unscaled[r * d..(r + 1) * d]);
            continue;
        }
        let m = acc.row_max[r].max(other.row_max[r]);
        let ea = math::exp32(acc.row_max[r] - m);
        let eb = math::exp32(other.row_max[r] - m);
        acc.row_sum[r] = ea * acc.row_sum[r] + eb * other.row_sum[r];
        acc.row_max[r] = m;
        for t in 0..d {
            let i = r * d + t;
            acc.o_unscaled[i] = ea * acc.o_unscaled[i] + eb * other.o_unscaled[i];
        }
    }
    Ok(())
}
