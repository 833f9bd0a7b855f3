//! Sweep configuration: a `key = value[,value...]` text format.
//!
//! ```text
//! # axes (cross product)
//! batches   = 1,4
//! heads     = 8,32
//! contexts  = 1024,16t        # tokens, or tiles with a `t` suffix
//! head_dims = 64
//! seeds     = 1,2
//! schedulers = seq,split:4,streamk
//!
//! # scalars
//! query_len = 1
//! grid      = auto            # or a worker count
//! repeats   = 5
//! warmups   = 2
//! verify    = false
//! # tile    = 64              # override the per-head-dim default
//! # ragged_ratios = 25,50,100 # percent of max context; enables ragged cells
//! ```

use std::str::FromStr;

use leanattn_core::TileConfig;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("sweep config: {0}")]
pub struct ParseError(pub String);

/// Scheduler selector shared by the CLI and sweep configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerKind {
    Sequential,
    FixedSplit(usize),
    StreamK,
}

impl SchedulerKind {
    pub fn label(&self) -> String {
        match self {
            SchedulerKind::Sequential => "seq".into(),
            SchedulerKind::FixedSplit(s) => format!("split:{s}"),
            SchedulerKind::StreamK => "streamk".into(),
        }
    }
}

impl FromStr for SchedulerKind {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        match s {
            "seq" | "sequential" => Ok(SchedulerKind::Sequential),
            "streamk" | "stream-k" => Ok(SchedulerKind::StreamK),
            other => {
                if let Some(n) = other.strip_prefix("split:") {
                    let split: usize = n
                        .parse()
                        .map_err(|_| ParseError(format!("bad split factor in `{other}`")))?;
                    if split == 0 {
                        return Err(ParseError("split factor must be >= 1".into()));
                    }
                    Ok(SchedulerKind::FixedSplit(split))
                } else {
                    Err(ParseError(format!(
                        "unknown scheduler `{other}` (expected seq, split:N, or streamk)"
                    )))
                }
            }
        }
    }
}

/// Context length: raw tokens, or a multiple of the KV tile width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtxSpec {
    Tokens(usize),
    Tiles(usize),
}

impl CtxSpec {
    pub fn resolve(&self, tile_n: usize) -> usize {
        match self {
            CtxSpec::Tokens(n) => *n,
            CtxSpec::Tiles(n) => n * tile_n,
        }
    }
}

impl FromStr for CtxSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        let (digits, tiles) = match s.strip_suffix('t') {
            Some(d) => (d, true),
            None => (s, false),
        };
        let n: usize = digits
            .parse()
            .map_err(|_| ParseError(format!("bad context length `{s}`")))?;
        if n == 0 {
            return Err(ParseError(format!("context length `{s}` must be >= 1")));
        }
        Ok(if tiles { CtxSpec::Tiles(n) } else { CtxSpec::Tokens(n) })
    }
}

/// Worker count, or hardware threads times the units-per-worker multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpec {
    Auto,
    Fixed(usize),
}

impl GridSpec {
    pub fn resolve(&self, units_per_worker: usize) -> usize {
        match self {
            GridSpec::Fixed(n) => *n,
            GridSpec::Auto => {
                let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
                (threads * units_per_worker).max(1)
            }
        }
    }
}

impl FromStr for GridSpec {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        if s == "auto" {
            return Ok(GridSpec::Auto);
        }
        let n: usize = s.parse().map_err(|_| ParseError(format!("bad grid `{s}`")))?;
        if n == 0 {
            return Err(ParseError("grid must be >= 1".into()));
        }
        Ok(GridSpec::Fixed(n))
    }
}

/// Parsed sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub batches: Vec<usize>,
    pub heads: Vec<usize>,
    pub contexts: Vec<CtxSpec>,
    pub head_dims: Vec<usize>,
    pub query_len: usize,
    pub schedulers: Vec<SchedulerKind>,
    pub grid: GridSpec,
    pub seeds: Vec<u64>,
    pub repeats: usize,
    pub warmups: usize,
    pub verify: bool,
    pub tile: Option<usize>,
    /// Average/max context ratios (fractions); present means ragged cells.
    pub ragged_ratios: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            batches: vec![1],
            heads: vec![1],
            contexts: vec![CtxSpec::Tiles(1)],
            head_dims: vec![64],
            query_len: 1,
            schedulers: vec![
                SchedulerKind::Sequential,
                SchedulerKind::FixedSplit(4),
                SchedulerKind::StreamK,
            ],
            grid: GridSpec::Auto,
            seeds: vec![0],
            repeats: 5,
            warmups: 2,
            verify: false,
            tile: None,
            ragged_ratios: None,
        }
    }
}

impl SweepConfig {
    /// KV tile width for a cell's head dim.
    pub fn tile_for(&self, head_dim: usize) -> usize {
        self.tile.unwrap_or_else(|| TileConfig::for_head_dim(head_dim).tile_n)
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ParseError>
where
    T::Err: std::fmt::Display,
{
    let items: Result<Vec<T>, _> = value
        .split(',')
        .map(|s| s.trim().parse::<T>())
        .collect();
    let items = items.map_err(|e| ParseError(format!("key `{key}`: {e}")))?;
    if items.is_empty() {
        return Err(ParseError(format!("key `{key}` has an empty list")));
    }
    Ok(items)
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T, ParseError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ParseError(format!("key `{key}`: {e}")))
}

/// Parses the text format; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<SweepConfig, ParseError> {
    let mut cfg = SweepConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ParseError(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "batches" => cfg.batches = parse_list(key, value)?,
            "heads" => cfg.heads = parse_list(key, value)?,
            "contexts" => cfg.contexts = parse_list(key, value)?,
            "head_dims" => cfg.head_dims = parse_list(key, value)?,
            "query_len" => cfg.query_len = parse_scalar(key, value)?,
            "schedulers" => cfg.schedulers = parse_list(key, value)?,
            "grid" => cfg.grid = parse_scalar(key, value)?,
            "seeds" => cfg.seeds = parse_list(key, value)?,
            "repeats" => cfg.repeats = parse_scalar(key, value)?,
            "warmups" => cfg.warmups = parse_scalar(key, value)?,
            "verify" => cfg.verify = parse_scalar(key, value)?,
            "tile" => cfg.tile = Some(parse_scalar(key, value)?),
            "ragged_ratios" => {
                let percents: Vec<f64> = parse_list(key, value)?;
                for &p in &percents {
                    if !(0.0..=100.0).contains(&p) || p <= 0.0 {
                        return Err(ParseError(format!("ragged ratio {p} out of (0, 100]")));
                    }
                }
                cfg.ragged_ratios = Some(percents.iter().map(|p| p / 100.0).collect());
            }
            other => return Err(ParseError(format!("unknown key `{other}`"))),
        }
    }
    if cfg.repeats == 0 {
        return Err(ParseError("repeats must be >= 1".into()));
    }
    if cfg.query_len == 0 {
        return Err(ParseError("query_len must be >= 1".into()));
    }
    Ok(cfg)
}

/// One sweep cell before the scheduler axis is applied.
#[derive(Debug, Clone)]
pub struct CellGroup {
    pub batch: usize,
    pub heads: usize,
    pub context: CtxSpec,
    pub head_dim: usize,
    pub seed: u64,
    /// Ragged cells carry their average/max context ratio.
    pub ragged_ratio: Option<f64>,
}

/// Expands the cross product of all axes.
pub fn expand(cfg: &SweepConfig) -> Vec<CellGroup> {
    let ratios: Vec<Option<f64>> = match &cfg.ragged_ratios {
        Some(rs) => rs.iter().map(|&r| Some(r)).collect(),
        None => vec![None],
    };
    let mut groups = Vec::new();
    for &batch in &cfg.batches {
        for &heads in &cfg.heads {
            for &context in &cfg.contexts {
                for &head_dim in &cfg.head_dims {
                    for &seed in &cfg.seeds {
                        for &ragged_ratio in &ratios {
                            groups.push(CellGroup {
                                batch,
                                heads,
                                context,
                                head_dim,
                                seed,
                                ragged_ratio,
                            });
                        }
                    }
                }
            }
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_scalars_and_comments() {
        let cfg = parse_config(
            "# comment\n\
             batches = 1, 2\n\
             heads = 4\n\
             contexts = 128, 5t\n\
             schedulers = seq, split:2, streamk\n\
             grid = 8\n\
             seeds = 7\n\
             repeats = 3\n\
             verify = true\n",
        )
        .unwrap();
        assert_eq!(cfg.batches, vec![1, 2]);
        assert_eq!(cfg.contexts, vec![CtxSpec::Tokens(128), CtxSpec::Tiles(5)]);
        assert_eq!(
            cfg.schedulers,
            vec![SchedulerKind::Sequential, SchedulerKind::FixedSplit(2), SchedulerKind::StreamK]
        );
        assert_eq!(cfg.grid, GridSpec::Fixed(8));
        assert!(cfg.verify);
        assert_eq!(expand(&cfg).len(), 2 * 1 * 2 * 1 * 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("nonsense = 1").is_err());
        assert!(parse_config("batches").is_err());
        assert!(parse_config("repeats = 0").is_err());
        assert!(parse_config("schedulers = warp").is_err());
        assert!(parse_config("contexts = 0").is_err());
        assert!(parse_config("ragged_ratios = 140").is_err());
    }

    #[test]
    fn ctx_notation() {
        assert_eq!("128".parse::<CtxSpec>().unwrap().resolve(64), 128);
        assert_eq!("5t".parse::<CtxSpec>().unwrap().resolve(64), 320);
        assert!("".parse::<CtxSpec>().is_err());
        assert!("xt".parse::<CtxSpec>().is_err());
    }
}
