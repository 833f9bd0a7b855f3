//! Decomposition of the tile-iteration space into per-worker assignments.
//!
//! Output tiles are linearized batch-major, then head-major, then
//! query-tile-major; each tile contributes `ceil(context/tile_n)` iterations
//! to a single global index space. Three strategies carve that space:
//!
//! - **stream-K**: contiguous, equalized per-worker ranges that cross tile
//!   boundaries as they may; max and min worker load differ by at most one.
//! - **fixed-split**: every tile cut into `split` near-equal chunks, chunks
//!   dealt round-robin to the grid.
//! - **sequential**: one worker per output tile.
//!
//! Ragged batches (per-request context lengths, no padding) linearize
//! head-major over the concatenated contexts and then schedule identically.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::error::Error;
use crate::problem::ProblemSpec;
use crate::tile::TileConfig;
use crate::Result;

/// One output tile in the global linearization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileEntry {
    /// Batch index; the request index in ragged mode.
    pub batch: usize,
    pub head: usize,
    pub query_tile: usize,
    /// First KV row of this tile's context within its tensor plane
    /// (0 for dense problems, the cumulative offset for ragged batches).
    pub kv_start: usize,
    /// Context length this tile attends over.
    pub kv_len: usize,
    /// Tile iterations, `ceil(kv_len / tile_n)`.
    pub iter_count: usize,
    /// Global index of this tile's first iteration.
    pub global_start: usize,
}

impl TileEntry {
    pub fn global_end(&self) -> usize {
        self.global_start + self.iter_count
    }
}

/// The linearized iteration space: every output tile plus the total count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileTable {
    pub entries: Vec<TileEntry>,
    pub total_iters: usize,
}

impl TileTable {
    pub fn tile_count(&self) -> usize {
        self.entries.len()
    }

    /// Index of the tile containing a global iteration.
    fn locate(&self, global_iter: usize) -> usize {
        debug_assert!(global_iter < self.total_iters);
        self.entries.partition_point(|e| e.global_end() <= global_iter)
    }
}

/// Enumerates output tiles batch-major, head-major, query-tile-major; each
/// carries `ceil(context_len / tile_n)` iterations.
pub fn linearize(problem: &ProblemSpec, cfg: &TileConfig) -> TileTable {
    let query_tiles = problem.query_len.div_ceil(cfg.tile_m);
    let iters = problem.context_len.div_ceil(cfg.tile_n);
    let mut entries = Vec::with_capacity(problem.batch * problem.heads * query_tiles);
    let mut global = 0;
    for batch in 0..problem.batch {
        for head in 0..problem.heads {
            for query_tile in 0..query_tiles {
                entries.push(TileEntry {
                    batch,
                    head,
                    query_tile,
                    kv_start: 0,
                    kv_len: problem.context_len,
                    iter_count: iters,
                    global_start: global,
                });
                global += iters;
            }
        }
    }
    TileTable { entries, total_iters: global }
}

/// A batch of decode requests with unequal context lengths, packed without
/// padding. Request boundaries live in the cumulative sequence-length array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaggedBatchSpec {
    pub heads: usize,
    pub head_dim: usize,
    pub context_lens: Vec<usize>,
    /// `cum_seq_lens[0] = 0`, `cum_seq_lens[b+1] - cum_seq_lens[b] =
    /// context_lens[b]`; the final entry is the total context length.
    pub cum_seq_lens: Vec<usize>,
}

impl RaggedBatchSpec {
    /// Builds the spec and its cumulative offsets from per-request lengths.
    pub fn new(heads: usize, head_dim: usize, context_lens: Vec<usize>) -> Result<Self> {
        if heads == 0 || head_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "heads and head_dim must be >= 1, got {heads} and {head_dim}"
            )));
        }
        if context_lens.is_empty() {
            return Err(Error::InvalidArgument("empty ragged batch".into()));
        }
        let mut cum = Vec::with_capacity(context_lens.len() + 1);
        cum.push(0);
        for (request, &len) in context_lens.iter().enumerate() {
            if len == 0 {
                return Err(Error::EmptyContext { request });
            }
            cum.push(cum[request] + len);
        }
        Ok(Self { heads, head_dim, context_lens, cum_seq_lens: cum })
    }

    pub fn batch(&self) -> usize {
        self.context_lens.len()
    }

    pub fn total_context(&self) -> usize {
        *self.cum_seq_lens.last().unwrap()
    }

    /// Re-checks the cumulative array against the per-request lengths.
    pub fn validate(&self) -> Result<()> {
        if self.cum_seq_lens.len() != self.context_lens.len() + 1 {
            return Err(Error::InvalidCumSeqLens(format!(
                "expected {} entries, got {}",
                self.context_lens.len() + 1,
                self.cum_seq_lens.len()
            )));
        }
        if self.cum_seq_lens[0] != 0 {
            return Err(Error::InvalidCumSeqLens("first entry must be 0".into()));
        }
        for (b, &len) in self.context_lens.iter().enumerate() {
            if len == 0 {
                return Err(Error::EmptyContext { request: b });
            }
            if self.cum_seq_lens[b + 1] != self.cum_seq_lens[b] + len {
                return Err(Error::InvalidCumSeqLens(format!(
                    "entry {} is {}, expected {}",
                    b + 1,
                    self.cum_seq_lens[b + 1],
                    self.cum_seq_lens[b] + len
                )));
            }
        }
        Ok(())
    }
}

/// Enumerates ragged output tiles head-major over the concatenated contexts;
/// request `b` of head `h` forms one tile of `ceil(context_lens[b]/tile_n)`
/// iterations addressing KV rows `[cum_seq_lens[b], cum_seq_lens[b+1])`.
pub fn linearize_ragged(spec: &RaggedBatchSpec, cfg: &TileConfig) -> Result<TileTable> {
    spec.validate()?;
    let mut entries = Vec::with_capacity(spec.heads * spec.batch());
    let mut global = 0;
    for head in 0..spec.heads {
        for (batch, &len) in spec.context_lens.iter().enumerate() {
            let iters = len.div_ceil(cfg.tile_n);
            entries.push(TileEntry {
                batch,
                head,
                query_tile: 0,
                kv_start: spec.cum_seq_lens[batch],
                kv_len: len,
                iter_count: iters,
                global_start: global,
            });
            global += iters;
        }
    }
    Ok(TileTable { entries, total_iters: global })
}

/// Scheduling strategy, recorded for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    FixedSplit { split: usize },
    StreamK,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Sequential => write!(f, "seq"),
            Strategy::FixedSplit { split } => write!(f, "split:{split}"),
            Strategy::StreamK => write!(f, "streamk"),
        }
    }
}

/// One contiguous run of tile iterations assigned to one worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub worker: usize,
    /// Index into the schedule's tile table.
    pub tile: usize,
    /// Local iteration range within the tile.
    pub iter_begin: usize,
    pub iter_end: usize,
    /// This segment owns the tile's first iteration and consolidates the
    /// tile's partials.
    pub is_host: bool,
    /// This segment reaches the tile's last iteration.
    pub is_finishing: bool,
}

impl Segment {
    pub fn iters(&self) -> usize {
        self.iter_end - self.iter_begin
    }
}

/// Work-per-worker as an exact fraction, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub numer: usize,
    pub denom: usize,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

/// Per-worker assignments over a linearized tile table.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub strategy: Strategy,
    pub grid: usize,
    pub total_iters: usize,
    pub table: TileTable,
    /// Sorted by worker, then by each worker's execution order.
    pub segments: Vec<Segment>,
    /// Iterations per worker as an exact fraction (total / grid).
    pub tiles_per_cta: Ratio,
    /// Set when a fixed-split factor exceeded some tile's iteration count
    /// and was clamped.
    pub split_clamped: bool,
    /// Workers with no assigned work (grid larger than the iteration space).
    pub idle_workers: usize,
}

impl Schedule {
    /// Total iterations assigned to each worker, idle workers included.
    pub fn per_worker_iters(&self) -> Vec<usize> {
        let mut loads = vec![0usize; self.grid];
        for seg in &self.segments {
            loads[seg.worker] += seg.iters();
        }
        loads
    }

    /// Useful work over worker capacity along the critical path:
    /// `total / (grid * max_worker_load)`. Exactly 1.0 for equal loads.
    pub fn quantization_efficiency(&self) -> f64 {
        let max = self.per_worker_iters().into_iter().max().unwrap_or(0);
        if max == 0 {
            return 0.0;
        }
        self.total_iters as f64 / (self.grid as f64 * max as f64)
    }

    /// Number of output tiles whose iterations span two or more workers,
    /// i.e. tiles that need a re-scaling reduction.
    pub fn reductions_required(&self) -> usize {
        let mut first_worker = vec![usize::MAX; self.table.tile_count()];
        let mut split = vec![false; self.table.tile_count()];
        for seg in &self.segments {
            if first_worker[seg.tile] == usize::MAX {
                first_worker[seg.tile] = seg.worker;
            } else if first_worker[seg.tile] != seg.worker {
                split[seg.tile] = true;
            }
        }
        split.iter().filter(|s| **s).count()
    }

    /// Segments of one worker, in execution order.
    pub fn segments_for(&self, worker: usize) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.worker == worker)
    }

    /// Text table, one row per segment.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str("# worker tile iter_begin iter_end host finishing\n");
        for seg in &self.segments {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                seg.worker,
                seg.tile,
                seg.iter_begin,
                seg.iter_end,
                seg.is_host as u8,
                seg.is_finishing as u8
            );
        }
        out
    }
}

fn check_grid(grid: usize) -> Result<()> {
    if grid == 0 {
        return Err(Error::InvalidArgument("grid must be >= 1".into()));
    }
    Ok(())
}

/// Stream-K: contiguous global ranges of `floor(total/grid)` or
/// `ceil(total/grid)` iterations per worker, the remainder going to the
/// lowest-numbered workers. Ranges crossing tile boundaries split into
/// per-tile segments with host/finishing flags.
pub fn schedule_stream_k(problem: &ProblemSpec, cfg: &TileConfig, grid: usize) -> Result<Schedule> {
    check_grid(grid)?;
    Ok(stream_k_over(linearize(problem, cfg), grid))
}

/// Stream-K over a ragged batch.
pub fn schedule_stream_k_ragged(
    spec: &RaggedBatchSpec,
    cfg: &TileConfig,
    grid: usize,
) -> Result<Schedule> {
    check_grid(grid)?;
    Ok(stream_k_over(linearize_ragged(spec, cfg)?, grid))
}

fn stream_k_over(table: TileTable, grid: usize) -> Schedule {
    let total = table.total_iters;
    let base = total / grid;
    let rem = total % grid;
    let range_start = |w: usize| w * base + w.min(rem);

    let mut segments = Vec::new();
    let mut idle = 0;
    for worker in 0..grid {
        let begin = range_start(worker);
        let end = range_start(worker + 1);
        if begin == end {
            idle += 1;
            continue;
        }
        let mut tile = table.locate(begin);
        let mut cursor = begin;
        while cursor < end {
            let entry = &table.entries[tile];
            let hi = end.min(entry.global_end());
            segments.push(Segment {
                worker,
                tile,
                iter_begin: cursor - entry.global_start,
                iter_end: hi - entry.global_start,
                is_host: cursor == entry.global_start,
                is_finishing: hi == entry.global_end(),
            });
            cursor = hi;
            tile += 1;
        }
    }
    Schedule {
        strategy: Strategy::StreamK,
        grid,
        total_iters: total,
        tiles_per_cta: Ratio { numer: total, denom: grid },
        table,
        segments,
        split_clamped: false,
        idle_workers: idle,
    }
}

/// Fixed-split: each tile's iterations divided into `split` near-equal
/// chunks (first chunks take the remainder), chunks dealt round-robin to
/// the grid in launch order. A split larger than a tile's iteration count
/// is clamped, flagged via `split_clamped`.
pub fn schedule_fixed_split(
    problem: &ProblemSpec,
    cfg: &TileConfig,
    grid: usize,
    split: usize,
) -> Result<Schedule> {
    check_grid(grid)?;
    if split == 0 {
        return Err(Error::InvalidArgument("split must be >= 1".into()));
    }
    Ok(fixed_split_over(linearize(problem, cfg), grid, split))
}

/// Fixed-split over a ragged batch.
pub fn schedule_fixed_split_ragged(
    spec: &RaggedBatchSpec,
    cfg: &TileConfig,
    grid: usize,
    split: usize,
) -> Result<Schedule> {
    check_grid(grid)?;
    if split == 0 {
        return Err(Error::InvalidArgument("split must be >= 1".into()));
    }
    Ok(fixed_split_over(linearize_ragged(spec, cfg)?, grid, split))
}

fn fixed_split_over(table: TileTable, grid: usize, split: usize) -> Schedule {
    let mut per_worker: Vec<Vec<Segment>> = vec![Vec::new(); grid];
    let mut clamped = false;
    let mut unit = 0usize;
    for (tile, entry) in table.entries.iter().enumerate() {
        let eff = split.min(entry.iter_count);
        clamped |= eff < split;
        let base = entry.iter_count / eff;
        let rem = entry.iter_count % eff;
        let chunk_start = |c: usize| c * base + c.min(rem);
        for chunk in 0..eff {
            let begin = chunk_start(chunk);
            let end = chunk_start(chunk + 1);
            per_worker[unit % grid].push(Segment {
                worker: unit % grid,
                tile,
                iter_begin: begin,
                iter_end: end,
                is_host: chunk == 0,
                is_finishing: end == entry.iter_count,
            });
            unit += 1;
        }
    }
    let idle = per_worker.iter().filter(|v| v.is_empty()).count();
    let segments: Vec<Segment> = per_worker.into_iter().flatten().collect();
    Schedule {
        strategy: Strategy::FixedSplit { split },
        grid,
        total_iters: table.total_iters,
        tiles_per_cta: Ratio { numer: table.total_iters, denom: grid },
        table,
        segments,
        split_clamped: clamped,
        idle_workers: idle,
    }
}

/// Sequential: one worker per output tile, owning all of its iterations;
/// the grid equals the tile count.
pub fn schedule_sequential(problem: &ProblemSpec, cfg: &TileConfig) -> Schedule {
    sequential_over(linearize(problem, cfg))
}

/// Sequential over a ragged batch.
pub fn schedule_sequential_ragged(spec: &RaggedBatchSpec, cfg: &TileConfig) -> Result<Schedule> {
    Ok(sequential_over(linearize_ragged(spec, cfg)?))
}

fn sequential_over(table: TileTable) -> Schedule {
    let segments: Vec<Segment> = table
        .entries
        .iter()
        .enumerate()
        .map(|(tile, entry)| Segment {
            worker: tile,
            tile,
            iter_begin: 0,
            iter_end: entry.iter_count,
            is_host: true,
            is_finishing: true,
        })
        .collect();
    let grid = table.tile_count();
    Schedule {
        strategy: Strategy::Sequential,
        grid,
        total_iters: table.total_iters,
        tiles_per_cta: Ratio { numer: table.total_iters, denom: grid },
        table,
        segments,
        split_clamped: false,
        idle_workers: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::Lcg;

    fn problem(batch: usize, heads: usize, nq: usize, nk: usize) -> ProblemSpec {
        ProblemSpec::new(batch, heads, nq, nk, 8).unwrap()
    }

    fn cfg(tile_n: usize) -> TileConfig {
        TileConfig::new(1, tile_n).unwrap()
    }

    #[test]
    fn linearize_counts() {
        // Two heads with five tiles each.
        let t = linearize(&problem(1, 2, 1, 5 * 16), &cfg(16));
        assert_eq!(t.tile_count(), 2);
        assert_eq!(t.total_iters, 10);

        // Smallest problem: one tile, one iteration.
        let t = linearize(&problem(1, 1, 1, 16), &cfg(16));
        assert_eq!(t.total_iters, 1);

        // 4 * 27 * (4096/256) iterations.
        let t = linearize(&problem(4, 27, 1, 4096), &cfg(256));
        assert_eq!(t.total_iters, 1728);
    }

    #[test]
    fn linearize_order_is_batch_head_querytile() {
        let p = ProblemSpec::new(2, 2, 3, 8, 4).unwrap();
        let t = linearize(&p, &TileConfig::new(2, 8).unwrap());
        // query_tiles = ceil(3/2) = 2, so 2*2*2 = 8 tiles.
        assert_eq!(t.tile_count(), 8);
        let coords: Vec<(usize, usize, usize)> =
            t.entries.iter().map(|e| (e.batch, e.head, e.query_tile)).collect();
        assert_eq!(
            coords,
            vec![
                (0, 0, 0),
                (0, 0, 1),
                (0, 1, 0),
                (0, 1, 1),
                (1, 0, 0),
                (1, 0, 1),
                (1, 1, 0),
                (1, 1, 1)
            ]
        );
    }

    #[test]
    fn stream_k_five_workers_two_heads() {
        // Ten iterations over five workers: two each. Worker 2 finishes the
        // first head and hosts the second.
        let s = schedule_stream_k(&problem(1, 2, 1, 5 * 16), &cfg(16), 5).unwrap();
        assert_eq!(s.per_worker_iters(), vec![2, 2, 2, 2, 2]);
        let expected = vec![
            Segment { worker: 0, tile: 0, iter_begin: 0, iter_end: 2, is_host: true, is_finishing: false },
            Segment { worker: 1, tile: 0, iter_begin: 2, iter_end: 4, is_host: false, is_finishing: false },
            Segment { worker: 2, tile: 0, iter_begin: 4, iter_end: 5, is_host: false, is_finishing: true },
            Segment { worker: 2, tile: 1, iter_begin: 0, iter_end: 1, is_host: true, is_finishing: false },
            Segment { worker: 3, tile: 1, iter_begin: 1, iter_end: 3, is_host: false, is_finishing: false },
            Segment { worker: 4, tile: 1, iter_begin: 3, iter_end: 5, is_host: false, is_finishing: true },
        ];
        assert_eq!(s.segments, expected);
        assert_eq!(s.reductions_required(), 2);
        assert_eq!(s.quantization_efficiency(), 1.0);
    }

    #[test]
    fn stream_k_dump_golden() {
        let s = schedule_stream_k(&problem(1, 2, 1, 5 * 16), &cfg(16), 5).unwrap();
        let expected = "\
# worker tile iter_begin iter_end host finishing
0 0 0 2 1 0
1 0 2 4 0 0
2 0 4 5 0 1
2 1 0 1 1 0
3 1 1 3 0 0
4 1 3 5 0 1
";
        assert_eq!(s.dump(), expected);
    }

    #[test]
    fn stream_k_recovers_sequential_when_grid_equals_tiles() {
        for (b, h, nk) in [(1, 4, 48), (2, 3, 100), (3, 1, 7)] {
            let p = problem(b, h, 1, nk);
            let sk = schedule_stream_k(&p, &cfg(16), b * h).unwrap();
            let seq = schedule_sequential(&p, &cfg(16));
            assert_eq!(sk.segments, seq.segments);
            assert_eq!(sk.reductions_required(), 0);
        }
    }

    #[test]
    fn stream_k_recovers_fixed_split_when_grid_is_multiple() {
        // grid = s * tiles with s dividing the per-tile iteration count.
        for (h, tiles_n, s) in [(3, 8, 2), (2, 6, 3), (5, 4, 4)] {
            let p = problem(1, h, 1, tiles_n * 16);
            let sk = schedule_stream_k(&p, &cfg(16), s * h).unwrap();
            let fs = schedule_fixed_split(&p, &cfg(16), s * h, s).unwrap();
            assert_eq!(sk.segments, fs.segments);
        }
    }

    #[test]
    fn stream_k_remainder_goes_to_low_workers() {
        // 10 iterations over 4 workers: loads 3,3,2,2.
        let s = schedule_stream_k(&problem(1, 2, 1, 5 * 16), &cfg(16), 4).unwrap();
        assert_eq!(s.per_worker_iters(), vec![3, 3, 2, 2]);
        let qe = s.quantization_efficiency();
        assert!((qe - 10.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn stream_k_grid_beyond_work_reports_idle() {
        let s = schedule_stream_k(&problem(1, 1, 1, 3 * 16), &cfg(16), 7).unwrap();
        assert_eq!(s.idle_workers, 4);
        assert_eq!(s.per_worker_iters(), vec![1, 1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn fixed_split_one_equals_sequential_structure() {
        let p = problem(1, 6, 1, 64);
        let fs = schedule_fixed_split(&p, &cfg(16), 6, 1).unwrap();
        let seq = schedule_sequential(&p, &cfg(16));
        assert_eq!(fs.segments, seq.segments);
    }

    #[test]
    fn fixed_split_undersubscribed_grid() {
        // 56 tiles on a 108-worker grid with no splitting: 52 idle workers
        // and quantization efficiency 56/108.
        let p = problem(1, 56, 1, 64);
        let s = schedule_fixed_split(&p, &cfg(16), 108, 1).unwrap();
        assert_eq!(s.idle_workers, 52);
        let qe = s.quantization_efficiency();
        assert!((qe - 56.0 / 108.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_split_chunks_are_unbalanced() {
        // Two tiles of 5 iterations split in two: chunks of 3 and 2.
        let p = problem(1, 2, 1, 5 * 16);
        let s = schedule_fixed_split(&p, &cfg(16), 4, 2).unwrap();
        let chunks: Vec<(usize, usize)> =
            s.segments.iter().map(|seg| (seg.iter_begin, seg.iter_end)).collect();
        assert!(chunks.contains(&(0, 3)) && chunks.contains(&(3, 5)));
        let loads = s.per_worker_iters();
        assert_eq!(loads.iter().max(), Some(&3));
        assert_eq!(loads.iter().min(), Some(&2));
    }

    #[test]
    fn fixed_split_clamps_oversized_split() {
        let p = problem(1, 1, 1, 3 * 16);
        let s = schedule_fixed_split(&p, &cfg(16), 4, 8).unwrap();
        assert!(s.split_clamped);
        // Clamped to 3 chunks of one iteration each.
        assert_eq!(s.segments.len(), 3);
        assert!(s.segments.iter().all(|seg| seg.iters() == 1));
    }

    #[test]
    fn ragged_linearize_counts_and_offsets() {
        let spec = RaggedBatchSpec::new(1, 8, vec![4, 2]).unwrap();
        assert_eq!(spec.cum_seq_lens, vec![0, 4, 6]);
        let t = linearize_ragged(&spec, &cfg(2)).unwrap();
        assert_eq!(t.total_iters, 3);
        assert_eq!(t.entries[0].kv_start, 0);
        assert_eq!(t.entries[1].kv_start, 4);
    }

    #[test]
    fn ragged_equal_contexts_match_dense_linearization() {
        // With one head the head-major ragged order coincides with the
        // batch-major dense order (kv_start aside, which reflects packing).
        let spec = RaggedBatchSpec::new(1, 8, vec![48, 48, 48]).unwrap();
        let ragged = linearize_ragged(&spec, &cfg(16)).unwrap();
        let dense = linearize(&problem(3, 1, 1, 48), &cfg(16));
        assert_eq!(ragged.total_iters, dense.total_iters);
        for (r, d) in ragged.entries.iter().zip(&dense.entries) {
            assert_eq!((r.batch, r.head, r.iter_count, r.global_start),
                       (d.batch, d.head, d.iter_count, d.global_start));
        }
    }

    #[test]
    fn ragged_skewed_contexts_balance_evenly() {
        // Contexts 1024/256/256 with 8 heads and tile 256: 6 iterations per
        // head, 48 total, so a grid of 6 gets 8 iterations per worker.
        let spec = RaggedBatchSpec::new(8, 8, vec![1024, 256, 256]).unwrap();
        let s = schedule_stream_k_ragged(&spec, &cfg(256), 6).unwrap();
        assert_eq!(s.total_iters, 48);
        assert_eq!(s.per_worker_iters(), vec![8; 6]);
        assert_eq!(s.quantization_efficiency(), 1.0);
    }

    #[test]
    fn ragged_zero_context_rejected() {
        assert!(matches!(
            RaggedBatchSpec::new(1, 8, vec![4, 0, 2]),
            Err(Error::EmptyContext { request: 1 })
        ));
    }

    #[test]
    fn ragged_validate_catches_tampered_cums() {
        let mut spec = RaggedBatchSpec::new(2, 8, vec![4, 2]).unwrap();
        spec.cum_seq_lens[1] = 5;
        assert!(matches!(spec.validate(), Err(Error::InvalidCumSeqLens(_))));
        assert!(linearize_ragged(&spec, &cfg(2)).is_err());
    }

    #[test]
    fn zero_grid_and_zero_split_rejected() {
        let p = problem(1, 1, 1, 16);
        assert!(schedule_stream_k(&p, &cfg(16), 0).is_err());
        assert!(schedule_fixed_split(&p, &cfg(16), 4, 0).is_err());
    }

    fn random_problem(rng: &mut Lcg) -> (ProblemSpec, TileConfig) {
        let p = ProblemSpec::new(
            rng.range(1, 4),
            rng.range(1, 8),
            rng.range(1, 4),
            rng.range(1, 400),
            4,
        )
        .unwrap();
        let cfg = TileConfig::new(rng.range(1, 3), rng.range(1, 48)).unwrap();
        (p, cfg)
    }

    fn check_coverage(s: &Schedule) {
        // Every global iteration is assigned exactly once.
        let mut seen = vec![0u8; s.total_iters];
        for seg in &s.segments {
            let entry = &s.table.entries[seg.tile];
            assert!(seg.iter_begin < seg.iter_end && seg.iter_end <= entry.iter_count);
            for i in seg.iter_begin..seg.iter_end {
                seen[entry.global_start + i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "coverage violated");
    }

    fn check_hosts(s: &Schedule) {
        // Exactly one host segment per tile, owning local iteration 0.
        let mut hosts = vec![0usize; s.table.tile_count()];
        for seg in &s.segments {
            if seg.is_host {
                assert_eq!(seg.iter_begin, 0);
                hosts[seg.tile] += 1;
            }
        }
        assert!(hosts.iter().all(|&c| c == 1), "host uniqueness violated");
    }

    #[test]
    fn coverage_disjointness_and_hosts_for_all_strategies() {
        let mut rng = Lcg::new(99);
        for _ in 0..500 {
            let (p, c) = random_problem(&mut rng);
            let tiles = linearize(&p, &c).tile_count();
            let grid = rng.range(1, 2 * tiles + 3);
            let split = rng.range(1, 6);
            for s in [
                schedule_stream_k(&p, &c, grid).unwrap(),
                schedule_fixed_split(&p, &c, grid, split).unwrap(),
                schedule_sequential(&p, &c),
            ] {
                check_coverage(&s);
                check_hosts(&s);
            }
        }
    }

    #[test]
    fn stream_k_balance_and_efficiency_dominance() {
        let mut rng = Lcg::new(123);
        for _ in 0..300 {
            let (p, c) = random_problem(&mut rng);
            let tiles = linearize(&p, &c).tile_count();
            let grid = rng.range(1, 2 * tiles + 3);
            let sk = schedule_stream_k(&p, &c, grid).unwrap();
            let loads = sk.per_worker_iters();
            let max = *loads.iter().max().unwrap();
            let min = *loads.iter().min().unwrap();
            assert!(max - min <= 1, "stream-K imbalance: {loads:?}");
            for split in [1, 2, 4, 8] {
                let fs = schedule_fixed_split(&p, &c, grid, split).unwrap();
                assert!(
                    fs.quantization_efficiency() <= sk.quantization_efficiency() + 1e-12,
                    "fixed-split beat stream-K"
                );
            }
        }
    }

    #[test]
    fn eq2_worked_example() {
        // 1728 iterations over a grid of 216: 8 per worker, perfectly even.
        let p = problem(4, 27, 1, 4096);
        let s = schedule_stream_k(&p, &TileConfig::new(1, 256).unwrap(), 216).unwrap();
        assert_eq!(s.tiles_per_cta.numer, 1728);
        assert_eq!(s.tiles_per_cta.denom, 216);
        assert_eq!(s.tiles_per_cta.value(), 8.0);
        assert!(s.per_worker_iters().iter().all(|&l| l == 8));
        assert_eq!(s.quantization_efficiency(), 1.0);
    }
}
