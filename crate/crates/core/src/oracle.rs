//! Brute-force standard attention, the correctness baseline.
//!
//! Deliberately materializes the score matrix `S = scale * Q K^T` and the
//! softmax matrix `P` per `(batch, head)` and accumulates everything in
//! 64-bit arithmetic, regardless of the 32-bit storage. Slow and simple on
//! purpose: every other execution path in the workspace is checked against
//! this one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::math;
use crate::problem::ProblemSpec;
use crate::tensor::{AttentionOutput, DeviceTensor};
use crate::Result;

/// Computes `O = softmax(scale * Q K^T) V` row by row, returning the output
/// tensor and the per-row logsumexp `L = m + log(l)`.
pub fn oracle_attention(
    problem: &ProblemSpec,
    q: &DeviceTensor,
    k: &DeviceTensor,
    v: &DeviceTensor,
) -> Result<AttentionOutput> {
    check_dims(problem, q, k, v)?;

    let nq = problem.query_len;
    let nk = problem.context_len;
    let d = problem.head_dim;
    let scale = problem.scale as f64;

    let mut out = DeviceTensor::zeros(problem.query_dims());
    let mut lse = vec![0.0f64; problem.batch * problem.heads * nq];

    let mut scores = vec![0.0f64; nq * nk];
    for b in 0..problem.batch {
        for h in 0..problem.heads {
            let qp = q.plane(b, h);
            let kp = k.plane(b, h);
            let vp = v.plane(b, h);

            // S = scale * Q K^T, materialized.
            for i in 0..nq {
                for j in 0..nk {
                    let mut s = 0.0f64;
                    for t in 0..d {
                        s += qp[i * d + t] as f64 * kp[j * d + t] as f64;
                    }
                    scores[i * nk + j] = s * scale;
                }
            }

            let plane_off = (b * problem.heads + h) * nq * d;
            let lse_off = (b * problem.heads + h) * nq;
            let out_data = out.data_mut();
            for i in 0..nq {
                let row = &scores[i * nk..(i + 1) * nk];
                let (p, l) = softmax_row(row);
                lse[lse_off + i] = l;
                for t in 0..d {
                    let mut acc = 0.0f64;
                    for j in 0..nk {
                        acc += p[j] * vp[j * d + t] as f64;
                    }
                    out_data[plane_off + i * d + t] = acc as f32;
                }
            }
        }
    }

    Ok(AttentionOutput { output: out, logsumexp: lse })
}

/// Softmax of one score row, materialized, plus its logsumexp.
fn softmax_row(scores: &[f64]) -> (Vec<f64>, f64) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = scores.iter().map(|&s| math::exp64(s - m)).collect();
    let l: f64 = p.iter().sum();
    for x in p.iter_mut() {
        *x /= l;
    }
    (p, m + math::ln64(l))
}

fn check_dims(
    problem: &ProblemSpec,
    q: &DeviceTensor,
    k: &DeviceTensor,
    v: &DeviceTensor,
) -> Result<()> {
    if q.dims() != problem.query_dims() {
        return Err(Error::ShapeMismatch(format!(
            "query dims {:?} do not match problem {:?}",
            q.dims(),
            problem.query_dims()
        )));
    }
    for (name, t) in [("key", k), ("value", v)] {
        if t.dims() != problem.kv_dims() {
            return Err(Error::ShapeMismatch(format!(
                "{name} dims {:?} do not match problem {:?}",
                t.dims(),
                problem.kv_dims()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{seed42_problem, seed42_tensors, SEED42_L, SEED42_O};

    #[test]
    fn single_token_softmax_is_identity() {
        // One score s = 1; softmax of a single score is 1, L = s + log 1 = 1.
        let p = ProblemSpec::with_scale(1, 1, 1, 1, 2, 1.0).unwrap();
        let q = DeviceTensor::from_vec(p.query_dims(), vec![1.0, 0.0]).unwrap();
        let k = DeviceTensor::from_vec(p.kv_dims(), vec![1.0, 0.0]).unwrap();
        let v = DeviceTensor::from_vec(p.kv_dims(), vec![5.0, 7.0]).unwrap();
        let r = oracle_attention(&p, &q, &k, &v).unwrap();
        assert_eq!(r.output.data(), &[5.0, 7.0]);
        assert_eq!(r.lse(0, 0, 0), 1.0);
    }

    #[test]
    fn zero_query_gives_uniform_weights() {
        // Q = 0 makes every score 0 for any scale, so O is the plain mean.
        for scale in [0.25f32, 1.0, 3.0] {
            let p = ProblemSpec::with_scale(1, 1, 1, 2, 1, scale).unwrap();
            let q = DeviceTensor::from_vec(p.query_dims(), vec![0.0]).unwrap();
            let k = DeviceTensor::from_vec(p.kv_dims(), vec![3.0, 9.0]).unwrap();
            let v = DeviceTensor::from_vec(p.kv_dims(), vec![1.0, 2.0]).unwrap();
            let r = oracle_attention(&p, &q, &k, &v).unwrap();
            assert_eq!(r.output.data(), &[1.5]);
            assert!((r.lse(0, 0, 0) - (2.0f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_extended_precision_evaluation() {
        // Expected values frozen from a 60-digit scalar evaluation of the
        // same Gaussian fixture (see testutil).
        let p = seed42_problem();
        let (q, k, v) = seed42_tensors();
        let r = oracle_attention(&p, &q, &k, &v).unwrap();
        for (got, want) in r.output.data().iter().zip(SEED42_O) {
            assert!(
                (*got as f64 - want).abs() < 1e-6,
                "output {got} vs frozen {want}"
            );
        }
        assert!(
            (r.lse(0, 0, 0) - SEED42_L).abs() < 1e-12,
            "lse {} vs frozen {}",
            r.lse(0, 0, 0),
            SEED42_L
        );
    }

    #[test]
    fn dimension_mismatch_is_descriptive() {
        let p = ProblemSpec::new(1, 1, 1, 2, 2).unwrap();
        let q = DeviceTensor::zeros([1, 1, 1, 2]);
        let k = DeviceTensor::zeros([1, 1, 3, 2]);
        let v = DeviceTensor::zeros(p.kv_dims());
        let err = oracle_attention(&p, &q, &k, &v).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn row_stochasticity() {
        // The weights implied by (O, L) must sum to one: sum exp(s_j - L) = 1.
        let mut rng = crate::testutil::Lcg::new(7);
        for _ in 0..50 {
            let nk = rng.range(1, 1024);
            let d = rng.range(1, 32);
            let p = ProblemSpec::new(1, 1, 1, nk, d).unwrap();
            let q = rng.tensor(p.query_dims());
            let k = rng.tensor(p.kv_dims());
            let v = rng.tensor(p.kv_dims());
            let r = oracle_attention(&p, &q, &k, &v).unwrap();
            let l = r.lse(0, 0, 0);
            let mut sum = 0.0f64;
            for j in 0..nk {
                let mut s = 0.0f64;
                for t in 0..d {
                    s += q.at(0, 0, 0, t) as f64 * k.at(0, 0, j, t) as f64;
                }
                sum += math::exp64(s * p.scale as f64 - l);
            }
            assert!((sum - 1.0).abs() < 1e-12, "row sum {sum} for nk={nk} d={d}");
        }
    }

    #[test]
    fn score_shift_moves_lse_only() {
        // Adding a constant to every score of a row leaves the softmax (and
        // thus O) unchanged and shifts L by that constant.
        let mut rng = crate::testutil::Lcg::new(11);
        let nk = 257;
        let scores: Vec<f64> = (0..nk).map(|_| rng.f64_pm(4.0)).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| s + 2.0).collect();
        let (p0, l0) = softmax_row(&scores);
        let (p1, l1) = softmax_row(&shifted);
        for (a, b) in p0.iter().zip(&p1) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!((l1 - l0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = crate::testutil::Lcg::new(13);
        for _ in 0..20 {
            let nk = rng.range(2, 200);
            let d = rng.range(1, 16);
            let p = ProblemSpec::new(1, 1, 1, nk, d).unwrap();
            let q = rng.tensor(p.query_dims());
            let k = rng.tensor(p.kv_dims());
            let v = rng.tensor(p.kv_dims());

            // Reverse the context axis of K and V identically.
            let perm: Vec<usize> = (0..nk).rev().collect();
            let permute = |t: &DeviceTensor| {
                let mut data = Vec::with_capacity(t.data().len());
                for &j in &perm {
                    data.extend_from_slice(&t.plane(0, 0)[j * d..(j + 1) * d]);
                }
                DeviceTensor::from_vec(t.dims(), data).unwrap()
            };
            let r0 = oracle_attention(&p, &q, &k, &v).unwrap();
            let r1 = oracle_attention(&p, &q, &permute(&k), &permute(&v)).unwrap();
            for (a, b) in r0.output.data().iter().zip(r1.output.data()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((r0.lse(0, 0, 0) - r1.lse(0, 0, 0)).abs() < 1e-12);
        }
    }
}
