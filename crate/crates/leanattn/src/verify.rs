//! Property suite behind `leanattn verify`.
//!
//! Each check runs a configurable number of randomized cases and reports
//! the first counterexample (problem dims, seed, max error) on failure.

use leanattn_core::{
    combine, finalize, neutral, oracle_attention, schedule_fixed_split,
    schedule_fixed_split_ragged, schedule_sequential, schedule_sequential_ragged,
    schedule_stream_k, schedule_stream_k_ragged, AttentionOutput, DeviceTensor, PartialState,
    ProblemSpec, RaggedBatchSpec, Schedule, TileConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::executor::{execute_ragged_with, execute_with, ExecOptions};
use crate::gen;
use crate::io::read_golden;

/// Instance counts and tolerances for one suite run.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub invariance_cases: usize,
    pub triples: usize,
    pub balance_cases: usize,
    pub ragged_cases: usize,
    pub seed: u64,
    /// Absolute tolerance for output agreement checks.
    pub tolerance: f64,
    /// Relative tolerance for the associativity check.
    pub assoc_tolerance: f64,
    pub threads: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            invariance_cases: 300,
            triples: 1000,
            balance_cases: 500,
            ragged_cases: 100,
            seed: 0,
            tolerance: 1e-4,
            assoc_tolerance: 1e-6,
            threads: None,
        }
    }
}

impl VerifyOptions {
    /// Reduced instance counts; the whole suite stays well under 30 s.
    pub fn quick(mut self) -> Self {
        self.invariance_cases = 40;
        self.triples = 200;
        self.balance_cases = 100;
        self.ragged_cases = 15;
        self
    }
}

/// Result of one named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    /// First counterexample, if the check failed.
    pub failure: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs every check and returns the outcomes in a fixed order.
pub fn run_suite(opts: &VerifyOptions) -> Vec<CheckOutcome> {
    vec![
        check_scheduler_invariance(opts),
        check_associativity(opts),
        check_balance(opts),
        check_ragged_equivalence(opts),
        check_golden_fixture(),
    ]
}

pub fn suite_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed())
}

fn exec_opts(opts: &VerifyOptions) -> ExecOptions {
    ExecOptions { max_threads: opts.threads, collect_trace: false }
}

fn random_problem(rng: &mut ChaCha8Rng) -> (ProblemSpec, TileConfig) {
    let nq = if rng.random_bool(0.5) { 1 } else { 4 };
    let nk = rng.random_range(1..=512);
    let d = *[8usize, 16, 32, 64].get(rng.random_range(0..4)).unwrap();
    let p = ProblemSpec::new(
        rng.random_range(1..=3),
        rng.random_range(1..=6),
        nq,
        nk,
        d,
    )
    .unwrap();
    let tile_n = *[4usize, 8, 16, 32, 64].get(rng.random_range(0..5)).unwrap();
    (p, TileConfig::new(1, tile_n).unwrap())
}

/// Largest absolute difference across the outputs and logsumexps.
pub fn max_abs_diff(a: &AttentionOutput, b: &AttentionOutput) -> f64 {
    let out = a
        .output
        .data()
        .iter()
        .zip(b.output.data())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .fold(0.0, f64::max);
    let lse = a
        .logsumexp
        .iter()
        .zip(&b.logsumexp)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    out.max(lse)
}

/// Outputs must agree across sequential, fixed-split, and stream-K
/// schedules of the same problem.
pub fn check_scheduler_invariance(opts: &VerifyOptions) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let eo = exec_opts(opts);
    for case in 0..opts.invariance_cases {
        let (p, cfg) = random_problem(&mut rng);
        let tensor_seed = rng.random::<u64>();
        let (q, k, v) = gen::problem_tensors(&p, tensor_seed);
        let tiles = leanattn_core::linearize(&p, &cfg).tile_count();
        let grid = rng.random_range(1..=2 * tiles + 2);

        let mut schedules: Vec<(String, Schedule)> =
            vec![("seq".into(), schedule_sequential(&p, &cfg))];
        for split in [2usize, 4, 8] {
            schedules.push((
                format!("split:{split}"),
                schedule_fixed_split(&p, &cfg, grid, split).unwrap(),
            ));
        }
        schedules.push(("streamk".into(), schedule_stream_k(&p, &cfg, grid).unwrap()));

        let mut results = Vec::new();
        for (name, s) in &schedules {
            match execute_with(&p, &q, &k, &v, s, &cfg, &eo) {
                Ok((out, _)) => results.push((name.clone(), out)),
                Err(e) => {
                    return CheckOutcome {
                        name: "scheduler-invariance",
                        cases: opts.invariance_cases,
                        failure: Some(format!(
                            "case {case}: {name} failed to execute: {e} \
                             (B={} h={} nq={} nk={} d={} tile={} grid={grid} seed={tensor_seed})",
                            p.batch, p.heads, p.query_len, p.context_len, p.head_dim, cfg.tile_n
                        )),
                    }
                }
            }
        }
        for i in 0..results.len() {
            for j in i + 1..results.len() {
                let err = max_abs_diff(&results[i].1, &results[j].1);
                if err > opts.tolerance {
                    return CheckOutcome {
                        name: "scheduler-invariance",
                        cases: opts.invariance_cases,
                        failure: Some(format!(
                            "case {case}: {} vs {} max |err| = {err:.3e} > {:.1e} \
                             (B={} h={} nq={} nk={} d={} tile={} grid={grid} seed={tensor_seed})",
                            results[i].0,
                            results[j].0,
                            opts.tolerance,
                            p.batch,
                            p.heads,
                            p.query_len,
                            p.context_len,
                            p.head_dim,
                            cfg.tile_n
                        )),
                    };
                }
            }
        }
    }
    CheckOutcome { name: "scheduler-invariance", cases: opts.invariance_cases, failure: None }
}

fn random_state(rng: &mut ChaCha8Rng, rows: usize, d: usize) -> PartialState {
    PartialState {
        o_unscaled: (0..rows * d).map(|_| rng.random_range(-8.0f32..8.0)).collect(),
        row_max: (0..rows).map(|_| rng.random_range(-4.0f32..4.0)).collect(),
        row_sum: (0..rows).map(|_| rng.random_range(0.05f32..20.0)).collect(),
    }
}

fn rel_err(a: f32, b: f32) -> f64 {
    let scale = (a.abs() as f64).max(b.abs() as f64).max(1.0);
    (a as f64 - b as f64).abs() / scale
}

/// Both association orders of the re-scaling operator must finalize equal,
/// and the identity element must be bitwise neutral.
pub fn check_associativity(opts: &VerifyOptions) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(2));
    for case in 0..opts.triples {
        let d = rng.random_range(1..=8);
        let x = random_state(&mut rng, 1, d);
        let y = random_state(&mut rng, 1, d);
        let z = random_state(&mut rng, 1, d);

        let n = neutral(1, d);
        if combine(&n, &x).unwrap() != x || combine(&x, &n).unwrap() != x {
            return CheckOutcome {
                name: "associativity",
                cases: opts.triples,
                failure: Some(format!("case {case}: identity law is not bitwise (d={d})")),
            };
        }

        let ab_c = combine(&combine(&x, &y).unwrap(), &z).unwrap();
        let a_bc = combine(&x, &combine(&y, &z).unwrap()).unwrap();
        let (fa, la) = finalize(&ab_c).unwrap();
        let (fb, lb) = finalize(&a_bc).unwrap();
        let mut err = rel_err(la[0], lb[0]).max(rel_err(ab_c.row_sum[0], a_bc.row_sum[0]));
        for (a, b) in fa.iter().zip(&fb) {
            err = err.max(rel_err(*a, *b));
        }
        if err > opts.assoc_tolerance {
            return CheckOutcome {
                name: "associativity",
                cases: opts.triples,
                failure: Some(format!(
                    "case {case}: association orders differ by {err:.3e} > {:.1e} (d={d})",
                    opts.assoc_tolerance
                )),
            };
        }
    }
    CheckOutcome { name: "associativity", cases: opts.triples, failure: None }
}

/// Stream-K loads must stay within one iteration of each other and its
/// quantization efficiency must dominate fixed-split on the same problem.
pub fn check_balance(opts: &VerifyOptions) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(3));
    for case in 0..opts.balance_cases {
        let (p, cfg) = random_problem(&mut rng);
        let tiles = leanattn_core::linearize(&p, &cfg).tile_count();
        let grid = rng.random_range(1..=2 * tiles + 2);
        let sk = schedule_stream_k(&p, &cfg, grid).unwrap();
        let loads = sk.per_worker_iters();
        let max = *loads.iter().max().unwrap();
        let min = *loads.iter().min().unwrap();
        let dims = format!(
            "B={} h={} nq={} nk={} d={} tile={} grid={grid}",
            p.batch, p.heads, p.query_len, p.context_len, p.head_dim, cfg.tile_n
        );
        if max - min > 1 {
            return CheckOutcome {
                name: "stream-k-balance",
                cases: opts.balance_cases,
                failure: Some(format!("case {case}: load spread {} > 1 ({dims})", max - min)),
            };
        }
        let qe = sk.quantization_efficiency();
        let bound = sk.total_iters as f64 / (sk.total_iters + grid - 1) as f64;
        if qe + 1e-12 < bound {
            return CheckOutcome {
                name: "stream-k-balance",
                cases: opts.balance_cases,
                failure: Some(format!(
                    "case {case}: efficiency {qe:.4} below bound {bound:.4} ({dims})"
                )),
            };
        }
        for split in [2usize, 4, 8] {
            let fs = schedule_fixed_split(&p, &cfg, grid, split).unwrap();
            if fs.quantization_efficiency() > qe + 1e-12 {
                return CheckOutcome {
                    name: "stream-k-balance",
                    cases: opts.balance_cases,
                    failure: Some(format!(
                        "case {case}: fixed-split({split}) efficiency {:.4} beats stream-K {qe:.4} ({dims})",
                        fs.quantization_efficiency()
                    )),
                };
            }
        }
    }
    CheckOutcome { name: "stream-k-balance", cases: opts.balance_cases, failure: None }
}

/// Builds per-request context lengths hitting a target average/max ratio.
pub fn ragged_lengths(batch: usize, max_ctx: usize, ratio: f64) -> Vec<usize> {
    let mut lens = vec![max_ctx];
    if batch > 1 {
        let rest = (max_ctx as f64 * (batch as f64 * ratio - 1.0) / (batch as f64 - 1.0))
            .round()
            .max(1.0) as usize;
        lens.extend(std::iter::repeat_n(rest.min(max_ctx), batch - 1));
    }
    lens
}

/// Extracts one request's tensors from a packed ragged batch.
fn unpack_request(
    spec: &RaggedBatchSpec,
    q: &DeviceTensor,
    k: &DeviceTensor,
    v: &DeviceTensor,
    request: usize,
) -> (ProblemSpec, DeviceTensor, DeviceTensor, DeviceTensor) {
    let d = spec.head_dim;
    let ctx = spec.context_lens[request];
    let p = ProblemSpec::new(1, spec.heads, 1, ctx, d).unwrap();
    let mut qd = Vec::with_capacity(spec.heads * d);
    let mut kd = Vec::with_capacity(spec.heads * ctx * d);
    let mut vd = Vec::with_capacity(spec.heads * ctx * d);
    let lo = spec.cum_seq_lens[request] * d;
    let hi = spec.cum_seq_lens[request + 1] * d;
    for head in 0..spec.heads {
        qd.extend_from_slice(q.plane(request, head));
        kd.extend_from_slice(&k.plane(0, head)[lo..hi]);
        vd.extend_from_slice(&v.plane(0, head)[lo..hi]);
    }
    (
        p,
        DeviceTensor::from_vec(p.query_dims(), qd).unwrap(),
        DeviceTensor::from_vec(p.kv_dims(), kd).unwrap(),
        DeviceTensor::from_vec(p.kv_dims(), vd).unwrap(),
    )
}

/// Packed ragged execution must match running each request on its own, and
/// stream-K must keep its one-iteration balance on ragged tables.
pub fn check_ragged_equivalence(opts: &VerifyOptions) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(4));
    let eo = exec_opts(opts);
    for case in 0..opts.ragged_cases {
        let batch = rng.random_range(2..=5);
        let heads = rng.random_range(1..=6);
        let d = *[8usize, 16, 32].get(rng.random_range(0..3)).unwrap();
        let max_ctx = rng.random_range(32..=512);
        let ratio = rng.random_range(0.1f64..=1.0);
        let spec =
            RaggedBatchSpec::new(heads, d, ragged_lengths(batch, max_ctx, ratio)).unwrap();
        let cfg = TileConfig::new(1, *[8usize, 16, 32, 64].get(rng.random_range(0..4)).unwrap())
            .unwrap();
        let tensor_seed = rng.random::<u64>();
        let (q, k, v) = gen::ragged_tensors(&spec, tensor_seed);
        let tiles = batch * heads;
        let grid = rng.random_range(1..=2 * tiles);
        let schedule = schedule_stream_k_ragged(&spec, &cfg, grid).unwrap();

        let dims = format!(
            "batch={batch} heads={heads} d={d} ctx={:?} tile={} grid={grid} seed={tensor_seed}",
            spec.context_lens, cfg.tile_n
        );
        let loads = schedule.per_worker_iters();
        if loads.iter().max().unwrap() - loads.iter().min().unwrap() > 1 {
            return CheckOutcome {
                name: "ragged-equivalence",
                cases: opts.ragged_cases,
                failure: Some(format!("case {case}: ragged stream-K imbalance ({dims})")),
            };
        }

        let (got, _) = match execute_ragged_with(&spec, &q, &k, &v, &schedule, &cfg, &eo) {
            Ok(r) => r,
            Err(e) => {
                return CheckOutcome {
                    name: "ragged-equivalence",
                    cases: opts.ragged_cases,
                    failure: Some(format!("case {case}: execution failed: {e} ({dims})")),
                }
            }
        };
        for request in 0..batch {
            let (p, rq, rk, rv) = unpack_request(&spec, &q, &k, &v, request);
            let want = oracle_attention(&p, &rq, &rk, &rv).unwrap();
            let mut err = 0.0f64;
            for head in 0..heads {
                for t in 0..d {
                    let a = got.output.at(request, head, 0, t) as f64;
                    let b = want.output.at(0, head, 0, t) as f64;
                    err = err.max((a - b).abs());
                }
                err = err.max((got.lse(request, head, 0) - want.lse(0, head, 0)).abs());
            }
            if err > opts.tolerance {
                return CheckOutcome {
                    name: "ragged-equivalence",
                    cases: opts.ragged_cases,
                    failure: Some(format!(
                        "case {case}: request {request} max |err| = {err:.3e} > {:.1e} ({dims})",
                        opts.tolerance
                    )),
                };
            }
        }
    }
    CheckOutcome { name: "ragged-equivalence", cases: opts.ragged_cases, failure: None }
}

/// Embedded golden fixture: the oracle must reproduce the frozen tensors.
pub fn check_golden_fixture() -> CheckOutcome {
    let fail = |msg: String| CheckOutcome {
        name: "golden-fixture",
        cases: 1,
        failure: Some(msg),
    };
    let load = |bytes: &[u8]| read_golden(std::io::Cursor::new(bytes));
    let q = match load(include_bytes!("../golden/seed42_q.latn")) {
        Ok(g) => g,
        Err(e) => return fail(format!("q: {e}")),
    };
    let k = load(include_bytes!("../golden/seed42_k.latn")).expect("embedded");
    let v = load(include_bytes!("../golden/seed42_v.latn")).expect("embedded");
    let want_out = load(include_bytes!("../golden/seed42_out.latn")).expect("embedded");
    let want_lse = load(include_bytes!("../golden/seed42_lse.latn")).expect("embedded");

    let p = ProblemSpec::new(1, 1, 1, 4, 2).unwrap();
    let got = oracle_attention(
        &p,
        &q.to_tensor().expect("rank-4 fixture"),
        &k.to_tensor().expect("rank-4 fixture"),
        &v.to_tensor().expect("rank-4 fixture"),
    )
    .unwrap();
    for (a, b) in got.output.data().iter().zip(&want_out.data) {
        if (*a as f64 - *b as f64).abs() > 1e-6 {
            return fail(format!("output {a} differs from frozen {b}"));
        }
    }
    if (got.lse(0, 0, 0) - want_lse.data[0] as f64).abs() > 1e-6 {
        return fail(format!(
            "logsumexp {} differs from frozen {}",
            got.lse(0, 0, 0),
            want_lse.data[0]
        ));
    }
    CheckOutcome { name: "golden-fixture", cases: 1, failure: None }
}
