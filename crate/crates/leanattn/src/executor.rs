//! Parallel schedule execution.
//!
//! Every schedule entry is one logical worker. Logical workers are mapped
//! onto a bounded pool of OS threads; each thread first computes all tile
//! segments of its workers (publishing un-scaled partials for non-host
//! segments and finalizing wholly-owned tiles directly), then performs the
//! pending reductions of the tiles its workers host. Deferring reductions
//! until a thread's own compute is done keeps the protocol deadlock-free
//! when logical workers outnumber threads: the compute phase never blocks,
//! so every partial gets published.
//!
//! Partials travel through write-once slots, one per non-host segment,
//! preallocated from the schedule. A slot's flag is raised only after its
//! state is stored under the same lock, so a waiting host observes fully
//! written data. Hosts fold peer states in ascending (worker, span) order
//! regardless of arrival order, which makes outputs bitwise reproducible
//! across runs and across pool widths.

use std::collections::HashMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use leanattn_core::{
    combine_into, finalize, lean_tile, linearize, linearize_ragged, AttentionOutput, DeviceTensor,
    PartialState, ProblemSpec, RaggedBatchSpec, Schedule, Segment, TileConfig, TileEntry,
};
use thiserror::Error;

/// Errors surfaced by schedule execution.
#[derive(Debug, Error)]
pub enum ExecError {
    /// The schedule was built for a different problem, batch, or tiling.
    #[error("schedule does not match inputs: {0}")]
    ScheduleMismatch(String),
    #[error(transparent)]
    Core(#[from] leanattn_core::Error),
    /// A worker thread panicked; the run was aborted.
    #[error("worker panicked: {0}")]
    WorkerPanic(String),
}

/// Execution knobs.
#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    /// Upper bound on OS threads; defaults to available parallelism.
    pub max_threads: Option<usize>,
    /// Record one trace event per executed segment.
    pub collect_trace: bool,
}

/// What a segment did, for trace output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentRole {
    /// Sole owner of its tile: finalized directly.
    Solo,
    /// Host of a split tile: reduced peers' partials later.
    Host,
    /// Non-host contributor: published its partial.
    Peer,
}

impl fmt::Display for SegmentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentRole::Solo => write!(f, "solo"),
            SegmentRole::Host => write!(f, "host"),
            SegmentRole::Peer => write!(f, "peer"),
        }
    }
}

/// One executed segment: who, what, and how long the tile walk took.
#[derive(Debug, Clone)]
pub struct SegmentTrace {
    pub worker: usize,
    pub tile: usize,
    pub iters: usize,
    pub role: SegmentRole,
    pub nanos: u64,
}

/// Post-run accounting.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub wall_time: Duration,
    pub per_worker_iters: Vec<usize>,
    /// Tiles whose iterations spanned two or more workers.
    pub reductions_performed: usize,
    pub quantization_efficiency: f64,
    /// Filled by callers that verify against the oracle.
    pub max_abs_error_vs_oracle: Option<f64>,
    pub trace: Option<Vec<SegmentTrace>>,
}

/// Executes a dense problem under the given schedule with default options.
pub fn execute(
    problem: &ProblemSpec,
    q: &DeviceTensor,
    k: &DeviceTensor,
    v: &DeviceTensor,
    schedule: &Schedule,
    cfg: &TileConfig,
) -> Result<(AttentionOutput, RunReport), ExecError> {
    execute_with(problem, q, k, v, schedule, cfg, &ExecOptions::default())
}

/// Executes a dense problem under the given schedule.
pub fn execute_with(
    problem: &ProblemSpec,
    q: &DeviceTensor,
    k: &DeviceTensor,
    v: &DeviceTensor,
    schedule: &Schedule,
    cfg: &TileConfig,
    opts: &ExecOptions,
) -> Result<(AttentionOutput, RunReport), ExecError> {
    if schedule.table != linearize(problem, cfg) {
        return Err(ExecError::ScheduleMismatch(
            "tile table differs from linearize(problem, cfg)".into(),
        ));
    }
    if q.dims() != problem.query_dims() {
        return Err(ExecError::ScheduleMismatch(format!(
            "query dims {:?} do not match problem {:?}",
            q.dims(),
            problem.query_dims()
        )));
    }
    for (name, t) in [("key", k), ("value", v)] {
        if t.dims() != problem.kv_dims() {
            return Err(ExecError::ScheduleMismatch(format!(
                "{name} dims {:?} do not match problem {:?}",
                t.dims(),
                problem.kv_dims()
            )));
        }
    }
    let inputs = Inputs::Dense { problem, q, k, v, cfg: *cfg };
    run(&inputs, schedule, problem.query_dims(), opts)
}

/// Executes a packed ragged batch with default options.
pub fn execute_ragged(
    spec: &RaggedBatchSpec,
    q: &DeviceTensor,
    k: &DeviceTensor,
    v: &DeviceTensor,
    schedule: &Schedule,
    cfg: &TileConfig,
) -> Result<(AttentionOutput, RunReport), ExecError> {
    execute_ragged_with(spec, q, k, v, schedule, cfg, &ExecOptions::default())
}

/// Executes a packed ragged batch: queries are `(batch, heads, 1, head_dim)`
/// and K/V are packed as `(1, heads, total_context, head_dim)`, requests
/// addressed through the cumulative offsets. The output holds one row per
/// `(request, head)`, exactly as if each request ran on its own.
pub fn execute_ragged_with(
    spec: &RaggedBatchSpec,
    q: &DeviceTensor,
    k: &DeviceTensor,
    v: &DeviceTensor,
    schedule: &Schedule,
    cfg: &TileConfig,
    opts: &ExecOptions,
) -> Result<(AttentionOutput, RunReport), ExecError> {
    spec.validate()?;
    if schedule.table != linearize_ragged(spec, cfg)? {
        return Err(ExecError::ScheduleMismatch(
            "tile table differs from linearize_ragged(spec, cfg)".into(),
        ));
    }
    let q_dims = [spec.batch(), spec.heads, 1, spec.head_dim];
    let kv_dims = [1, spec.heads, spec.total_context(), spec.head_dim];
    if q.dims() != q_dims {
        return Err(ExecError::ScheduleMismatch(format!(
            "ragged query dims {:?}, expected {:?}",
            q.dims(),
            q_dims
        )));
    }
    for (name, t) in [("key", k), ("value", v)] {
        if t.dims() != kv_dims {
            return Err(ExecError::ScheduleMismatch(format!(
                "ragged {name} dims {:?}, expected packed {:?}",
                t.dims(),
                kv_dims
            )));
        }
    }
    // Per-request problem views; only scale/context/head_dim matter to the
    // tile walk. Scale is the conventional default.
    let specs: Vec<ProblemSpec> = spec
        .context_lens
        .iter()
        .map(|&len| ProblemSpec::new(1, 1, 1, len, spec.head_dim))
        .collect::<Result<_, _>>()?;
    let inputs = Inputs::Ragged { specs, q, k, v, cfg: *cfg };
    run(&inputs, schedule, q_dims, opts)
}

enum Inputs<'a> {
    Dense {
        problem: &'a ProblemSpec,
        q: &'a DeviceTensor,
        k: &'a DeviceTensor,
        v: &'a DeviceTensor,
        cfg: TileConfig,
    },
    Ragged {
        specs: Vec<ProblemSpec>,
        q: &'a DeviceTensor,
        k: &'a DeviceTensor,
        v: &'a DeviceTensor,
        cfg: TileConfig,
    },
}

impl<'a> Inputs<'a> {
    fn cfg(&self) -> &TileConfig {
        match self {
            Inputs::Dense { cfg, .. } | Inputs::Ragged { cfg, .. } => cfg,
        }
    }

    /// Query rows, KV planes, and the per-tile problem view for one tile.
    fn tile_views(&self, entry: &TileEntry) -> (&ProblemSpec, &'a [f32], &'a [f32], &'a [f32]) {
        match self {
            Inputs::Dense { problem, q, k, v, cfg } => {
                let d = problem.head_dim;
                let row0 = entry.query_tile * cfg.tile_m;
                let rows = cfg.tile_m.min(problem.query_len - row0);
                let qp = q.plane(entry.batch, entry.head);
                let q_rows = &qp[row0 * d..(row0 + rows) * d];
                (
                    problem,
                    q_rows,
                    k.plane(entry.batch, entry.head),
                    v.plane(entry.batch, entry.head),
                )
            }
            Inputs::Ragged { specs, q, k, v, .. } => {
                let spec = &specs[entry.batch];
                let d = spec.head_dim;
                let kv = entry.kv_start * d..(entry.kv_start + entry.kv_len) * d;
                (
                    spec,
                    q.plane(entry.batch, entry.head),
                    &k.plane(0, entry.head)[kv.clone()],
                    &v.plane(0, entry.head)[kv],
                )
            }
        }
    }

    /// First output row and row count of one tile in the output tensor.
    fn out_rows(&self, entry: &TileEntry, out_dims: [usize; 4]) -> (usize, usize) {
        let [_, heads, len, _] = out_dims;
        match self {
            Inputs::Dense { problem, cfg, .. } => {
                let row0 = entry.query_tile * cfg.tile_m;
                let rows = cfg.tile_m.min(problem.query_len - row0);
                ((entry.batch * heads + entry.head) * len + row0, rows)
            }
            Inputs::Ragged { .. } => ((entry.batch * heads + entry.head) * len, 1),
        }
    }
}

/// Write-once partial slots with blocking notification.
struct PartialStore {
    slots: Vec<Slot>,
    aborted: AtomicBool,
}

struct Slot {
    cell: Mutex<Option<PartialState>>,
    ready: Condvar,
}

impl PartialStore {
    fn new(n: usize) -> Self {
        Self {
            slots: (0..n)
                .map(|_| Slot { cell: Mutex::new(None), ready: Condvar::new() })
                .collect(),
            aborted: AtomicBool::new(false),
        }
    }

    fn publish(&self, idx: usize, state: PartialState) {
        let slot = &self.slots[idx];
        let mut cell = slot.cell.lock().unwrap_or_else(|e| e.into_inner());
        assert!(cell.is_none(), "partial slot {idx} written twice");
        *cell = Some(state);
        slot.ready.notify_all();
    }

    /// Blocks until the slot is filled; `None` means the run was aborted.
    fn take_when_ready(&self, idx: usize) -> Option<PartialState> {
        let slot = &self.slots[idx];
        let mut cell = slot.cell.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if self.aborted.load(Ordering::Acquire) {
                return None;
            }
            if let Some(state) = cell.take() {
                return Some(state);
            }
            cell = match slot.ready.wait(cell) {
                Ok(g) => g,
                Err(e) => e.into_inner(),
            };
        }
    }

    fn abort(&self) {
        self.aborted.store(true, Ordering::Release);
        for slot in &self.slots {
            let _hold = slot.cell.lock().unwrap_or_else(|e| e.into_inner());
            slot.ready.notify_all();
        }
    }
}

#[derive(Clone, Copy)]
enum StepRole {
    Peer { slot: usize },
    Solo,
    Host,
}

#[derive(Clone, Copy)]
struct Step {
    seg: Segment,
    role: StepRole,
}

struct ThreadTask<'buf> {
    /// Steps of this thread's logical workers, in execution order.
    steps: Vec<Step>,
    /// Output and logsumexp rows of the tiles hosted by this thread.
    outs: HashMap<usize, (&'buf mut [f32], &'buf mut [f64])>,
}

fn run(
    inputs: &Inputs,
    schedule: &Schedule,
    out_dims: [usize; 4],
    opts: &ExecOptions,
) -> Result<(AttentionOutput, RunReport), ExecError> {
    let table = &schedule.table;
    let cfg = inputs.cfg();

    // Slot per non-host segment, preallocated; per-tile peer lists sorted by
    // (worker, span) so the fold order is fixed by the schedule alone.
    let mut slot_of_segment: Vec<Option<usize>> = vec![None; schedule.segments.len()];
    let mut peers_of_tile: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); table.tile_count()];
    let mut n_slots = 0;
    for (i, seg) in schedule.segments.iter().enumerate() {
        if !seg.is_host {
            slot_of_segment[i] = Some(n_slots);
            peers_of_tile[seg.tile].push((seg.worker, seg.iter_begin, n_slots));
            n_slots += 1;
        }
    }
    for peers in peers_of_tile.iter_mut() {
        peers.sort_unstable();
    }
    let fold_order: Vec<Vec<usize>> = peers_of_tile
        .iter()
        .map(|peers| peers.iter().map(|&(_, _, slot)| slot).collect())
        .collect();
    let store = PartialStore::new(n_slots);

    // Carve the output buffers into disjoint per-tile row slices.
    let mut out_buf = vec![0.0f32; out_dims.iter().product()];
    let mut lse_buf = vec![0.0f64; out_dims[0] * out_dims[1] * out_dims[2]];
    let d = out_dims[3];
    let mut out_spans = Vec::with_capacity(table.tile_count());
    let mut lse_spans = Vec::with_capacity(table.tile_count());
    for entry in &table.entries {
        let (row0, rows) = inputs.out_rows(entry, out_dims);
        out_spans.push((row0 * d, rows * d));
        lse_spans.push((row0, rows));
    }
    let out_slices = carve(&mut out_buf, &out_spans);
    let lse_slices = carve(&mut lse_buf, &lse_spans);

    // Hand each tile's output rows to the thread running its host worker.
    let width = opts
        .max_threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
        .min(schedule.grid);
    let mut host_thread = vec![0usize; table.tile_count()];
    for seg in &schedule.segments {
        if seg.is_host {
            host_thread[seg.tile] = seg.worker % width;
        }
    }
    let mut tasks: Vec<ThreadTask> = (0..width)
        .map(|_| ThreadTask { steps: Vec::new(), outs: HashMap::new() })
        .collect();
    for (tile, (out, lse)) in out_slices.into_iter().zip(lse_slices).enumerate() {
        tasks[host_thread[tile]].outs.insert(tile, (out, lse));
    }
    // Logical workers stride across threads; each worker's segments stay in
    // schedule order.
    for (i, seg) in schedule.segments.iter().enumerate() {
        let role = match slot_of_segment[i] {
            Some(slot) => StepRole::Peer { slot },
            None if seg.is_finishing => StepRole::Solo,
            None => StepRole::Host,
        };
        tasks[seg.worker % width].steps.push(Step { seg: *seg, role });
    }
    for task in tasks.iter_mut() {
        task.steps.sort_by_key(|s| s.seg.worker);
    }

    let panic_note: Mutex<Option<String>> = Mutex::new(None);
    let started = Instant::now();
    let traces: Vec<Option<Vec<SegmentTrace>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = tasks
            .into_iter()
            .map(|task| {
                let store = &store;
                let fold_order = &fold_order;
                let panic_note = &panic_note;
                scope.spawn(move || {
                    match catch_unwind(AssertUnwindSafe(|| {
                        run_thread(task, inputs, table, cfg, store, fold_order, opts.collect_trace)
                    })) {
                        Ok(trace) => trace,
                        Err(payload) => {
                            let msg = payload
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| payload.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "unknown panic".into());
                            *panic_note.lock().unwrap_or_else(|e| e.into_inner()) = Some(msg);
                            store.abort();
                            None
                        }
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or(None)).collect()
    });
    let wall_time = started.elapsed();

    if store.aborted.load(Ordering::Acquire) {
        let msg = panic_note
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .take()
            .unwrap_or_else(|| "aborted".into());
        return Err(ExecError::WorkerPanic(msg));
    }

    let trace = if opts.collect_trace {
        let mut all: Vec<SegmentTrace> = traces.into_iter().flatten().flatten().collect();
        all.sort_by_key(|t| (t.worker, t.tile, t.iters));
        Some(all)
    } else {
        None
    };

    let output = DeviceTensor::from_vec(out_dims, out_buf).expect("carved buffer matches dims");
    let report = RunReport {
        wall_time,
        per_worker_iters: schedule.per_worker_iters(),
        reductions_performed: schedule.reductions_required(),
        quantization_efficiency: schedule.quantization_efficiency(),
        max_abs_error_vs_oracle: None,
        trace,
    };
    Ok((AttentionOutput { output, logsumexp: lse_buf }, report))
}

fn run_thread(
    mut task: ThreadTask,
    inputs: &Inputs,
    table: &leanattn_core::TileTable,
    cfg: &TileConfig,
    store: &PartialStore,
    fold_order: &[Vec<usize>],
    tracing: bool,
) -> Option<Vec<SegmentTrace>> {
    let mut trace = Vec::new();
    let mut pending: Vec<(usize, PartialState)> = Vec::new();

    // Compute phase: never blocks, so every peer slot gets published.
    for step in &task.steps {
        let seg = &step.seg;
        let entry = &table.entries[seg.tile];
        let (spec, q_rows, k_plane, v_plane) = inputs.tile_views(entry);
        let t0 = tracing.then(Instant::now);
        let state = lean_tile(spec, q_rows, k_plane, v_plane, seg.iter_begin, seg.iter_end, cfg)
            .expect("schedule validated against inputs");
        let role = match step.role {
            StepRole::Peer { slot } => {
                store.publish(slot, state);
                SegmentRole::Peer
            }
            StepRole::Solo => {
                let (out, lse) = finalize(&state).expect("non-empty segment");
                let (o_rows, l_rows) = task.outs.get_mut(&seg.tile).expect("host owns its rows");
                o_rows.copy_from_slice(&out);
                for (dst, src) in l_rows.iter_mut().zip(&lse) {
                    *dst = *src as f64;
                }
                SegmentRole::Solo
            }
            StepRole::Host => {
                pending.push((seg.tile, state));
                SegmentRole::Host
            }
        };
        if let Some(t0) = t0 {
            trace.push(SegmentTrace {
                worker: seg.worker,
                tile: seg.tile,
                iters: seg.iters(),
                role,
                nanos: t0.elapsed().as_nanos() as u64,
            });
        }
    }

    // Reduction phase: fold peer partials in schedule order and write.
    for (tile, mut acc) in pending {
        for &slot in &fold_order[tile] {
            let peer = store.take_when_ready(slot)?;
            combine_into(&mut acc, &peer).expect("peer states share the tile shape");
        }
        let (out, lse) = finalize(&acc).expect("tile saw at least one token");
        let (o_rows, l_rows) = task.outs.get_mut(&tile).expect("host owns its rows");
        o_rows.copy_from_slice(&out);
        for (dst, src) in l_rows.iter_mut().zip(&lse) {
            *dst = *src as f64;
        }
    }
    Some(trace)
}

/// Splits a buffer into disjoint mutable spans, returned in `spans` order.
fn carve<'a, T>(buf: &'a mut [T], spans: &[(usize, usize)]) -> Vec<&'a mut [T]> {
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_unstable_by_key(|&i| spans[i].0);
    let mut result: Vec<Option<&'a mut [T]>> = (0..spans.len()).map(|_| None).collect();
    let mut rest = buf;
    let mut consumed = 0;
    for &i in &order {
        let (off, len) = spans[i];
        debug_assert!(off >= consumed, "output spans overlap");
        let (_gap, tail) = rest.split_at_mut(off - consumed);
        let (mine, tail) = tail.split_at_mut(len);
        result[i] = Some(mine);
        rest = tail;
        consumed = off + len;
    }
    result.into_iter().map(|s| s.expect("every span carved")).collect()
}
