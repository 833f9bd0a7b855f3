//! Shared fixtures and a tiny deterministic generator for unit tests.

use alloc::vec::Vec;

use crate::problem::ProblemSpec;
use crate::tensor::DeviceTensor;

/// Gaussian fixture drawn from a ChaCha8(seed=42) standard-normal stream in
/// Q, K, V order (see the `leanattn` crate's tensor generator), frozen here
/// so the values cannot drift. Problem: nq=1, nk=4, d=2, scale=1/sqrt(2).
pub const SEED42_Q: [f32; 2] = [0.47798124, 1.3340706];
pub const SEED42_K: [f32; 8] = [
    -0.21086669, 0.4763469, -0.5120906, -0.93397844, -1.0023779, 0.9166636, 2.1215765,
    -0.71854734,
];
pub const SEED42_V: [f32; 8] = [
    0.03137886, 1.0449802, 2.032184, 0.3553947, 0.5732135, -0.83012974, 0.28817743, -0.5208273,
];

/// Expected output and logsumexp for the fixture, frozen from a 60-digit
/// scalar evaluation of standard attention (with the scale taken as the
/// 32-bit rounding of 1/sqrt(2), matching `ProblemSpec::new`).
pub const SEED42_O: [f64; 2] = [0.44572638585571056, -0.0654809816630003];
pub const SEED42_L: f64 = 1.5129316089725842;

pub fn seed42_problem() -> ProblemSpec {
    ProblemSpec::new(1, 1, 1, 4, 2).unwrap()
}

pub fn seed42_tensors() -> (DeviceTensor, DeviceTensor, DeviceTensor) {
    let p = seed42_problem();
    (
        DeviceTensor::from_vec(p.query_dims(), SEED42_Q.to_vec()).unwrap(),
        DeviceTensor::from_vec(p.kv_dims(), SEED42_K.to_vec()).unwrap(),
        DeviceTensor::from_vec(p.kv_dims(), SEED42_V.to_vec()).unwrap(),
    )
}

/// Minimal splitmix64-based generator; enough for seeded test data without
/// pulling a full RNG into every unit test.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() as usize) % (hi - lo + 1)
    }

    /// Uniform f32 in `[-a, a]`.
    pub fn f32_pm(&mut self, a: f32) -> f32 {
        let u = (self.next_u64() >> 40) as f32 / (1u64 << 24) as f32;
        (2.0 * u - 1.0) * a
    }

    /// Uniform f64 in `[-a, a]`.
    pub fn f64_pm(&mut self, a: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        (2.0 * u - 1.0) * a
    }

    /// Tensor with entries uniform in `[-1, 1]`.
    pub fn tensor(&mut self, dims: [usize; 4]) -> DeviceTensor {
        let len: usize = dims.iter().product();
        let data: Vec<f32> = (0..len).map(|_| self.f32_pm(1.0)).collect();
        DeviceTensor::from_vec(dims, data).unwrap()
    }
}
