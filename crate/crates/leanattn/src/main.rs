//! Benchmark and verification CLI for the exact-attention engine.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use leanattn::executor::{execute_ragged_with, execute_with, ExecOptions, RunReport};
use leanattn::gen;
use leanattn::sweep::{self, CtxSpec, GridSpec, SchedulerKind, SweepConfig};
use leanattn::verify::{self, VerifyOptions};
use leanattn_core::{
    oracle_attention, schedule_fixed_split, schedule_fixed_split_ragged, schedule_sequential,
    schedule_sequential_ragged, schedule_stream_k, schedule_stream_k_ragged, AttentionOutput,
    ProblemSpec, RaggedBatchSpec, Schedule, TileConfig,
};

const CSV_SCHEMA: &str = "# leanattn csv v1";
const RUN_HEADER: &str = "batch,heads,query_len,context,head_dim,tile_n,scheduler,grid,\
                          wall_time_ns,quantization_efficiency,reductions,max_abs_error";
const SWEEP_HEADER: &str = "batch,heads,query_len,context,head_dim,tile_n,scheduler,grid,seed,\
                            median_wall_ns,quantization_efficiency,reductions,max_abs_error,\
                            rel_throughput_vs_seq,error";

/// Tolerance applied by `run --verify` and sweep verification.
const VERIFY_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "leanattn",
    version,
    about = "Exact-attention compute engine: run problems, sweep benchmarks, verify properties"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one attention problem and print a CSV row.
    Run(RunArgs),
    /// Execute the cross product of a sweep config file.
    Sweep(SweepArgs),
    /// Run the randomized property suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    /// Query length (1 in the decode phase).
    #[arg(long, default_value_t = 1)]
    nq: usize,
    /// Context length in tokens, or in KV tiles with a `t` suffix (e.g. 5t).
    #[arg(long)]
    ctx: Option<String>,
    #[arg(long = "head-dim", default_value_t = 64)]
    head_dim: usize,
    /// KV tile width in tokens; defaults to 256 (128 for head dims >= 128).
    #[arg(long)]
    tile: Option<usize>,
    /// Worker count, or `auto` = hardware threads x --max-units-per-worker.
    #[arg(long, default_value = "auto")]
    grid: String,
    /// Workers per hardware thread under `--grid auto`.
    #[arg(long = "max-units-per-worker", default_value_t = 1)]
    max_units_per_worker: usize,
    /// seq | split:N | streamk
    #[arg(long, default_value = "streamk")]
    scheduler: String,
    /// Comma-separated per-request context lengths; switches to ragged mode.
    #[arg(long)]
    ragged: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timed repetitions; more than one adds two warmup runs and reports the
    /// median.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Compare against the reference oracle; exits nonzero beyond 1e-4.
    #[arg(long)]
    verify: bool,
    /// Print the schedule as a text table before the CSV output.
    #[arg(long = "dump-schedule")]
    dump_schedule: bool,
    /// Also write the CSV output to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write one trace line per executed segment to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config file (key = value lists; see the README).
    config: PathBuf,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scheduler-invariance cases.
    #[arg(long)]
    problems: Option<usize>,
    /// Associativity triples.
    #[arg(long)]
    triples: Option<usize>,
    /// Load-balance cases.
    #[arg(long = "balance-cases")]
    balance_cases: Option<usize>,
    /// Ragged-equivalence cases.
    #[arg(long = "ragged-cases")]
    ragged_cases: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the agreement tolerances (absolute and relative alike).
    #[arg(long)]
    tolerance: Option<f64>,
    /// Reduced instance counts for a fast pass.
    #[arg(long)]
    quick: bool,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Verify(args) => cmd_verify(args),
    }
}

/// LEANATTN_THREADS caps the executor's thread pool.
fn env_threads() -> Result<Option<usize>> {
    match std::env::var("LEANATTN_THREADS") {
        Ok(s) => {
            let n: usize = s
                .parse()
                .map_err(|_| anyhow!("LEANATTN_THREADS must be a positive integer, got `{s}`"))?;
            if n == 0 {
                bail!("LEANATTN_THREADS must be >= 1");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn median_ns(mut times: Vec<u64>) -> u64 {
    times.sort_unstable();
    times[(times.len() - 1) / 2]
}

fn build_dense_schedule(
    kind: SchedulerKind,
    problem: &ProblemSpec,
    cfg: &TileConfig,
    grid: usize,
) -> Result<Schedule> {
    Ok(match kind {
        SchedulerKind::Sequential => schedule_sequential(problem, cfg),
        SchedulerKind::FixedSplit(s) => schedule_fixed_split(problem, cfg, grid, s)?,
        SchedulerKind::StreamK => schedule_stream_k(problem, cfg, grid)?,
    })
}

fn build_ragged_schedule(
    kind: SchedulerKind,
    spec: &RaggedBatchSpec,
    cfg: &TileConfig,
    grid: usize,
) -> Result<Schedule> {
    Ok(match kind {
        SchedulerKind::Sequential => schedule_sequential_ragged(spec, cfg)?,
        SchedulerKind::FixedSplit(s) => schedule_fixed_split_ragged(spec, cfg, grid, s)?,
        SchedulerKind::StreamK => schedule_stream_k_ragged(spec, cfg, grid)?,
    })
}

/// Largest output/logsumexp deviation from the per-request oracle.
fn ragged_oracle_error(
    spec: &RaggedBatchSpec,
    q: &leanattn_core::DeviceTensor,
    k: &leanattn_core::DeviceTensor,
    v: &leanattn_core::DeviceTensor,
    got: &AttentionOutput,
) -> f64 {
    let mut err = 0.0f64;
    for request in 0..spec.batch() {
        let (p, rq, rk, rv) = verify::unpack_request(spec, q, k, v, request);
        let want = oracle_attention(&p, &rq, &rk, &rv).expect("request tensors consistent");
        for head in 0..spec.heads {
            for t in 0..spec.head_dim {
                let a = got.output.at(request, head, 0, t) as f64;
                let b = want.output.at(0, head, 0, t) as f64;
                err = err.max((a - b).abs());
            }
            err = err.max((got.lse(request, head, 0) - want.lse(0, head, 0)).abs());
        }
    }
    err
}

struct CellResult {
    median_ns: u64,
    report: RunReport,
    max_abs_error: Option<f64>,
    context_label: String,
    grid: usize,
}

/// Runs one (problem, scheduler) cell: warmups, timed repeats, optional
/// verification. Returns the last run's report with the median time.
#[allow(clippy::too_many_arguments)]
fn run_cell(
    kind: SchedulerKind,
    dense: Option<(&ProblemSpec, &TileConfig)>,
    ragged: Option<(&RaggedBatchSpec, &TileConfig)>,
    grid: usize,
    seed: u64,
    repeats: usize,
    warmups: usize,
    do_verify: bool,
    opts: &ExecOptions,
) -> Result<CellResult> {
    let mut times = Vec::with_capacity(repeats);
    match (dense, ragged) {
        (Some((problem, cfg)), None) => {
            let schedule = build_dense_schedule(kind, problem, cfg, grid)?;
            let (q, k, v) = gen::problem_tensors(problem, seed);
            for _ in 0..warmups {
                execute_with(problem, &q, &k, &v, &schedule, cfg, opts)?;
            }
            let mut last = None;
            for _ in 0..repeats {
                let (out, report) = execute_with(problem, &q, &k, &v, &schedule, cfg, opts)?;
                times.push(report.wall_time.as_nanos() as u64);
                last = Some((out, report));
            }
            let (out, mut report) = last.expect("repeats >= 1");
            let max_abs_error = do_verify.then(|| {
                let want = oracle_attention(problem, &q, &k, &v).expect("dims checked");
                verify::max_abs_diff(&out, &want)
            });
            report.max_abs_error_vs_oracle = max_abs_error;
            Ok(CellResult {
                median_ns: median_ns(times),
                report,
                max_abs_error,
                context_label: problem.context_len.to_string(),
                grid: schedule.grid,
            })
        }
        (None, Some((spec, cfg))) => {
            let schedule = build_ragged_schedule(kind, spec, cfg, grid)?;
            let (q, k, v) = gen::ragged_tensors(spec, seed);
            for _ in 0..warmups {
                execute_ragged_with(spec, &q, &k, &v, &schedule, cfg, opts)?;
            }
            let mut last = None;
            for _ in 0..repeats {
                let (out, report) =
                    execute_ragged_with(spec, &q, &k, &v, &schedule, cfg, opts)?;
                times.push(report.wall_time.as_nanos() as u64);
                last = Some((out, report));
            }
            let (out, mut report) = last.expect("repeats >= 1");
            let max_abs_error =
                do_verify.then(|| ragged_oracle_error(spec, &q, &k, &v, &out));
            report.max_abs_error_vs_oracle = max_abs_error;
            let context_label = spec
                .context_lens
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(";");
            Ok(CellResult {
                median_ns: median_ns(times),
                report,
                max_abs_error,
                context_label,
                grid: schedule.grid,
            })
        }
        _ => unreachable!("exactly one of dense/ragged"),
    }
}

fn fmt_error_col(err: Option<f64>) -> String {
    err.map(|e| format!("{e:.3e}")).unwrap_or_default()
}

fn write_csv(path: Option<&PathBuf>, content: &str) -> Result<()> {
    print!("{content}");
    if let Some(path) = path {
        fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let kind: SchedulerKind = args.scheduler.parse()?;
    let opts = ExecOptions { max_threads: env_threads()?, collect_trace: args.trace.is_some() };
    let warmups = if args.repeats > 1 { 2 } else { 0 };
    if args.repeats == 0 {
        bail!("--repeats must be >= 1");
    }

    let tile_n =
        args.tile.unwrap_or_else(|| TileConfig::for_head_dim(args.head_dim).tile_n);
    let cfg = TileConfig::new(1, tile_n)?;
    let grid_spec: GridSpec = args.grid.parse()?;
    let grid = grid_spec.resolve(args.max_units_per_worker);

    let (schedule, result, query_len, batch, heads) = match &args.ragged {
        None => {
            let ctx_spec: CtxSpec = args
                .ctx
                .as_deref()
                .ok_or_else(|| anyhow!("--ctx is required (or use --ragged)"))?
                .parse()?;
            let context_len = ctx_spec.resolve(tile_n);
            let problem =
                ProblemSpec::new(args.batch, args.heads, args.nq, context_len, args.head_dim)?;
            let schedule = build_dense_schedule(kind, &problem, &cfg, grid)?;
            let result = run_cell(
                kind,
                Some((&problem, &cfg)),
                None,
                grid,
                args.seed,
                args.repeats,
                warmups,
                args.verify,
                &opts,
            )?;
            (schedule, result, args.nq, args.batch, args.heads)
        }
        Some(list) => {
            if args.ctx.is_some() {
                bail!("--ctx conflicts with --ragged");
            }
            if args.nq != 1 {
                bail!("ragged mode is decode-only (--nq must be 1)");
            }
            let lens: Vec<usize> = list
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| anyhow!("bad --ragged list `{list}`"))?;
            if args.batch != 1 && args.batch != lens.len() {
                bail!("--batch {} conflicts with {} ragged contexts", args.batch, lens.len());
            }
            let spec = RaggedBatchSpec::new(args.heads, args.head_dim, lens)?;
            let schedule = build_ragged_schedule(kind, &spec, &cfg, grid)?;
            let result = run_cell(
                kind,
                None,
                Some((&spec, &cfg)),
                grid,
                args.seed,
                args.repeats,
                warmups,
                args.verify,
                &opts,
            )?;
            let batch = spec.batch();
            (schedule, result, 1, batch, args.heads)
        }
    };

    if args.dump_schedule {
        print!("{}", schedule.dump());
    }
    if let Some(path) = &args.trace {
        let mut out = String::from("# worker tile iters role nanos\n");
        for t in result.report.trace.as_deref().unwrap_or(&[]) {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                t.worker, t.tile, t.iters, t.role, t.nanos
            ));
        }
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    }

    let row = format!(
        "{batch},{heads},{query_len},{context},{head_dim},{tile_n},{sched},{grid},{ns},{qe:.6},{red},{err}\n",
        context = result.context_label,
        head_dim = args.head_dim,
        sched = kind.label(),
        grid = result.grid,
        ns = result.median_ns,
        qe = result.report.quantization_efficiency,
        red = result.report.reductions_performed,
        err = fmt_error_col(result.max_abs_error),
    );
    write_csv(args.csv.as_ref(), &format!("{CSV_SCHEMA}\n{RUN_HEADER}\n{row}"))?;

    if let Some(err) = result.max_abs_error {
        if err > VERIFY_TOLERANCE {
            eprintln!("verification failed: max |err| = {err:.3e} > {VERIFY_TOLERANCE:.1e}");
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let cfg = sweep::parse_config(&text)?;
    let groups = sweep::expand(&cfg);
    let threads = env_threads()?;
    let opts = ExecOptions { max_threads: threads, collect_trace: false };

    let mut content = format!("{CSV_SCHEMA}\n{SWEEP_HEADER}\n");
    for group in &groups {
        let tile_n = cfg.tile_for(group.head_dim);
        let tile_cfg = TileConfig::new(1, tile_n)?;
        let grid = cfg.grid.resolve(1);

        // Run every scheduler in this cell group, then normalize throughput
        // to the sequential baseline if it is part of the sweep.
        let mut results: Vec<(SchedulerKind, Result<CellResult>)> = Vec::new();
        for &kind in &cfg.schedulers {
            let outcome = if let Some(ratio) = group.ragged_ratio {
                let max_ctx = group.context.resolve(tile_n);
                verify::ragged_lengths(group.batch, max_ctx, ratio)
                    .pipe(|lens| RaggedBatchSpec::new(group.heads, group.head_dim, lens))
                    .map_err(anyhow::Error::from)
                    .and_then(|spec| {
                        run_cell(
                            kind,
                            None,
                            Some((&spec, &tile_cfg)),
                            grid,
                            group.seed,
                            cfg.repeats,
                            cfg.warmups,
                            cfg.verify,
                            &opts,
                        )
                    })
            } else {
                ProblemSpec::new(
                    group.batch,
                    group.heads,
                    cfg.query_len,
                    group.context.resolve(tile_n),
                    group.head_dim,
                )
                .map_err(anyhow::Error::from)
                .and_then(|problem| {
                    run_cell(
                        kind,
                        Some((&problem, &tile_cfg)),
                        None,
                        grid,
                        group.seed,
                        cfg.repeats,
                        cfg.warmups,
                        cfg.verify,
                        &opts,
                    )
                })
            };
            results.push((kind, outcome));
        }

        let seq_median = results.iter().find_map(|(k, r)| match (k, r) {
            (SchedulerKind::Sequential, Ok(res)) => Some(res.median_ns),
            _ => None,
        });
        for (kind, outcome) in results {
            match outcome {
                Ok(res) => {
                    let rel = seq_median
                        .map(|s| format!("{:.4}", s as f64 / res.median_ns.max(1) as f64))
                        .unwrap_or_default();
                    content.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{:.6},{},{},{},\n",
                        group.batch,
                        group.heads,
                        cfg.query_len,
                        res.context_label,
                        group.head_dim,
                        tile_n,
                        kind.label(),
                        res.grid,
                        group.seed,
                        res.median_ns,
                        res.report.quantization_efficiency,
                        res.report.reductions_performed,
                        fmt_error_col(res.max_abs_error),
                        rel,
                    ));
                }
                Err(e) => {
                    let msg = format!("{e:#}").replace(',', ";").replace('\n', " ");
                    content.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},,,,,,{}\n",
                        group.batch,
                        group.heads,
                        cfg.query_len,
                        "",
                        group.head_dim,
                        tile_n,
                        kind.label(),
                        grid,
                        group.seed,
                        msg,
                    ));
                }
            }
        }
    }

    match &args.csv {
        Some(path) => fs::write(path, &content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let mut opts = VerifyOptions::default();
    if args.quick {
        opts = opts.quick();
    }
    if let Some(n) = args.problems {
        opts.invariance_cases = n;
    }
    if let Some(n) = args.triples {
        opts.triples = n;
    }
    if let Some(n) = args.balance_cases {
        opts.balance_cases = n;
    }
    if let Some(n) = args.ragged_cases {
        opts.ragged_cases = n;
    }
    opts.seed = args.seed;
    if let Some(t) = args.tolerance {
        opts.tolerance = t;
        opts.assoc_tolerance = t;
    }
    opts.threads = env_threads()?;

    let outcomes = verify::run_suite(&opts);
    let mut stdout = std::io::stdout().lock();
    for o in &outcomes {
        match &o.failure {
            None => writeln!(stdout, "check {} ({} cases): PASS", o.name, o.cases)?,
            Some(msg) => {
                writeln!(stdout, "check {} ({} cases): FAIL", o.name, o.cases)?;
                writeln!(stdout, "  counterexample: {msg}")?;
            }
        }
    }
    Ok(if verify::suite_passed(&outcomes) { 0 } else { 1 })
}

/// Small pipe helper to keep the sweep cell construction readable.
trait Pipe: Sized {
    fn pipe<T>(self, f: impl FnOnce(Self) -> T) -> T {
        f(self)
    }
}
impl<T> Pipe for T {}
