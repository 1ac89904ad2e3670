use std::collections::BTreeMap;

use serde::Serialize;

use super::engine::{Counters, Origin, SchedEvent, SegmentRunner, SegmentStart, StreamEngine};
use super::{LengthDist, SrsConfig};
use crate::error::{Error, Result};

const MAIN_STREAM: u64 = 0;
const WARMUP_STREAM: u64 = 1;

/// Feeds pre-drawn lengths to the engine. Task `j` of epoch `e` gets index
/// `e * batch_size + j` of the main stream, matching the synchronous run.
#[derive(Debug, Clone)]
pub struct SimRunner {
    dist: LengthDist,
    seed: u64,
    batch_size: usize,
    lengths: Vec<usize>,
}

impl SimRunner {
    pub fn new(dist: LengthDist, seed: u64, batch_size: usize) -> Self {
        Self { dist, seed, batch_size, lengths: Vec::new() }
    }

    pub fn length(&self, task: usize) -> usize {
        self.lengths[task]
    }
}

impl SegmentRunner for SimRunner {
    fn admit(&mut self, task: usize, origin: Origin) -> Result<()> {
        let len = if origin.warmup {
            self.dist.length_at(self.seed, WARMUP_STREAM, origin.slot as u64)
        } else {
            self.dist
                .length_at(self.seed, MAIN_STREAM, origin.epoch * self.batch_size as u64 + origin.slot as u64)
        };
        debug_assert_eq!(task, self.lengths.len());
        self.lengths.push(len as usize);
        Ok(())
    }

    fn start_segments(&mut self, starts: &[SegmentStart]) -> Result<Vec<usize>> {
        Ok(starts.iter().map(|s| self.lengths[s.task]).collect())
    }

    fn truncate(&mut self, _task: usize, _emitted: usize) -> Result<()> {
        Ok(())
    }
}

/// One training step's worth of generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub time: u64,
    pub idle_fraction: f64,
    pub tokens: u64,
    pub fresh: usize,
    pub pooled: usize,
    /// Staleness value to count of batch members.
    pub staleness: BTreeMap<u64, usize>,
}

fn mean_time(it: &[IterationRecord]) -> f64 {
    if it.is_empty() {
        return 0.0;
    }
    it.iter().map(|r| r.time as f64).sum::<f64>() / it.len() as f64
}

fn time_per_token(it: &[IterationRecord]) -> f64 {
    let tokens: u64 = it.iter().map(|r| r.tokens).sum();
    if tokens == 0 {
        return 0.0;
    }
    it.iter().map(|r| r.time as f64).sum::<f64>() / tokens as f64
}

fn mean_idle(it: &[IterationRecord]) -> f64 {
    if it.is_empty() {
        return 0.0;
    }
    it.iter().map(|r| r.idle_fraction).sum::<f64>() / it.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncReport {
    pub iterations: Vec<IterationRecord>,
    pub mean_time: f64,
    pub time_per_token: f64,
    pub mean_idle: f64,
}

/// Synchronous generation: each iteration waits for its whole batch. Tasks go
/// to the earliest-free main unit (lowest index on ties).
pub fn simulate_sync(cfg: &SrsConfig, n_iterations: usize, seed: u64) -> Result<SyncReport> {
    if cfg.batch_size == 0 || cfg.n_main_units == 0 {
        return Err(Error::Config("batch_size and n_main_units must be at least 1".into()));
    }
    if !(cfg.tokens_per_unit_per_tick.is_finite() && cfg.tokens_per_unit_per_tick > 0.0) {
        return Err(Error::Config("tokens_per_unit_per_tick must be positive".into()));
    }
    cfg.lengths.validate()?;
    let b = cfg.batch_size;
    let rate = cfg.tokens_per_unit_per_tick;
    let mut iterations = Vec::with_capacity(n_iterations);
    for i in 0..n_iterations {
        let mut free = vec![0u64; cfg.n_main_units];
        let mut busy = vec![0u64; cfg.n_main_units];
        let mut tokens = 0;
        for j in 0..b {
            let len = cfg.lengths.length_at(seed, MAIN_STREAM, (i * b + j) as u64);
            tokens += len;
            let ticks = ((len as f64 / rate) - 1e-9).ceil().max(1.0) as u64;
            let unit = (0..free.len()).min_by_key(|&u| (free[u], u)).expect("n_main >= 1");
            free[unit] += ticks;
            busy[unit] += ticks;
        }
        let time = *free.iter().max().expect("n_main >= 1");
        let idle: u64 = busy.iter().map(|&d| time - d).sum();
        iterations.push(IterationRecord {
            iteration: i,
            time,
            idle_fraction: idle as f64 / (cfg.n_main_units as f64 * time as f64),
            tokens,
            fresh: b,
            pooled: 0,
            staleness: BTreeMap::from([(0, b)]),
        });
    }
    Ok(SyncReport {
        mean_time: mean_time(&iterations),
        time_per_token: time_per_token(&iterations),
        mean_idle: mean_idle(&iterations),
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StallReport {
    pub iteration: usize,
    pub tick: u64,
    pub fresh: usize,
    pub pooled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamingReport {
    /// Timed iterations; the warm-up wave is not among them.
    pub iterations: Vec<IterationRecord>,
    pub warmup_ticks: u64,
    pub staleness_histogram: BTreeMap<u64, usize>,
    pub stall: Option<StallReport>,
    pub counters: Counters,
    pub dropped: u64,
    pub mean_time: f64,
    pub time_per_token: f64,
    pub mean_idle: f64,
    /// Every task's segment versions were non-decreasing.
    pub versions_monotone: bool,
    #[serde(skip)]
    pub log: Vec<SchedEvent>,
}

/// Streaming generation with completion ratio `alpha_onpolicy`.
pub fn simulate_streaming(cfg: &SrsConfig, n_iterations: usize, seed: u64) -> Result<StreamingReport> {
    let mut engine = StreamEngine::new(cfg.engine_config()?, 0)?;
    let mut runner = SimRunner::new(cfg.lengths.clone(), seed, cfg.batch_size);
    let warmup_ticks = engine.start(&mut runner)?;
    let mut iterations = Vec::with_capacity(n_iterations);
    let mut histogram = BTreeMap::new();
    let mut stall = None;
    for i in 0..n_iterations {
        let batch = match engine.next_batch(&mut runner) {
            Ok(b) => b,
            Err(Error::Stall { tick, fresh, pooled }) => {
                stall = Some(StallReport { iteration: i, tick, fresh, pooled });
                break;
            }
            Err(e) => return Err(e),
        };
        let mut staleness = BTreeMap::new();
        for &s in &batch.staleness {
            *staleness.entry(s).or_insert(0) += 1;
            *histogram.entry(s).or_insert(0) += 1;
        }
        iterations.push(IterationRecord {
            iteration: i,
            time: batch.iteration_time,
            idle_fraction: batch.main_idle_fraction,
            tokens: batch.members().map(|t| runner.length(t) as u64).sum(),
            fresh: batch.fresh.len(),
            pooled: batch.pooled.len(),
            staleness,
        });
        if i + 1 < n_iterations {
            engine.bump(&mut runner, batch.version + 1)?;
        }
    }
    let versions_monotone = engine
        .tasks()
        .iter()
        .all(|t| t.segments.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1.end == w[1].1.start));
    Ok(StreamingReport {
        mean_time: mean_time(&iterations),
        time_per_token: time_per_token(&iterations),
        mean_idle: mean_idle(&iterations),
        iterations,
        warmup_ticks,
        staleness_histogram: histogram,
        stall,
        counters: engine.counters(),
        dropped: engine.pool().dropped(),
        versions_monotone,
        log: engine.log().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// Synchronous over streaming mean iteration time.
    pub speedup: f64,
    /// The same ratio per consumed token.
    pub token_speedup: f64,
    pub sync_mean_time: f64,
    pub streaming_mean_time: f64,
    pub sync_idle: f64,
    pub streaming_idle: f64,
    pub stalled: bool,
}

/// Runs both schedulers on the same length sequence.
pub fn compare_schedulers(cfg: &SrsConfig, n_iterations: usize, seed: u64) -> Result<Comparison> {
    let sync = simulate_sync(cfg, n_iterations, seed)?;
    let stream = simulate_streaming(cfg, n_iterations, seed)?;
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::INFINITY };
    Ok(Comparison {
        speedup: ratio(sync.mean_time, stream.mean_time),
        token_speedup: ratio(sync.time_per_token, stream.time_per_token),
        sync_mean_time: sync.mean_time,
        streaming_mean_time: stream.mean_time,
        sync_idle: sync.mean_idle,
        streaming_idle: stream.mean_idle,
        stalled: stream.stall.is_some(),
    })
}
