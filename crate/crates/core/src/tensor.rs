//! Dense 4-d tensor storage and the attention result bundle.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// Dense row-major `f32` array with dims `(batch, heads, length, head_dim)`,
/// `head_dim` innermost. Houses Q, K, V, and O.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTensor {
    dims: [usize; 4],
    data: Vec<f32>,
}

impl DeviceTensor {
    /// Zero-filled tensor.
    pub fn zeros(dims: [usize; 4]) -> Self {
        let len = dims.iter().product();
        Self { dims, data: vec![0.0; len] }
    }

    /// Wraps an existing buffer; its length must match the dims product.
    pub fn from_vec(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "tensor dims {dims:?} require {expect} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// The contiguous `(length, head_dim)` block of one `(batch, head)`.
    pub fn plane(&self, batch: usize, head: usize) -> &[f32] {
        let [_, heads, len, dim] = self.dims;
        let stride = len * dim;
        let off = (batch * heads + head) * stride;
        &self.data[off..off + stride]
    }

    /// Element accessor; row-major `(batch, heads, length, head_dim)`.
    pub fn at(&self, batch: usize, head: usize, row: usize, col: usize) -> f32 {
        let [_, heads, len, dim] = self.dims;
        self.data[((batch * heads + head) * len + row) * dim + col]
    }
}

/// Attention result: the output tensor plus the per-row softmax normalizer
/// in log space, `L = m + log(l)`, shaped `(batch, heads, query_len)`.
///
/// `L` is kept in 64-bit so the reference oracle stays sharp enough to check
/// row-stochasticity at 1e-12; threaded execution widens its 32-bit result.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: DeviceTensor,
    pub logsumexp: Vec<f64>,
}

impl AttentionOutput {
    /// Logsumexp for one query row.
    pub fn lse(&self, batch: usize, head: usize, row: usize) -> f64 {
        let [_, heads, len, _] = self.output.dims();
        self.logsumexp[(batch * heads + head) * len + row]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(DeviceTensor::from_vec([1, 2, 3, 4], vec![0.0; 24]).is_ok());
        assert!(DeviceTensor::from_vec([1, 2, 3, 4], vec![0.0; 23]).is_err());
    }

    #[test]
    fn layout_is_batch_heads_length_dim() {
        // 2 batches x 2 heads x 2 rows x 2 cols, data = 0..16.
        let t = DeviceTensor::from_vec([2, 2, 2, 2], (0..16).map(|x| x as f32).collect()).unwrap();
        assert_eq!(t.at(0, 0, 0, 1), 1.0);
        assert_eq!(t.at(0, 1, 0, 0), 4.0);
        assert_eq!(t.at(1, 0, 0, 0), 8.0);
        assert_eq!(t.at(1, 1, 1, 1), 15.0);
        assert_eq!(t.plane(1, 0), &[8.0, 9.0, 10.0, 11.0]);
    }
}
