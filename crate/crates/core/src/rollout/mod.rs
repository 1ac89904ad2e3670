//! Generation scheduling: a synchronous baseline and streaming rollout with
//! a completion ratio, versioned snapshots, a prioritized sample pool and
//! continuation of partial generations on standalone units.
//!
//! Time is counted in integer ticks. A unit emits `tokens_per_unit_per_tick`
//! tokens per tick; standalone units are `fp8_speedup` times faster. The
//! same [`engine::StreamEngine`] drives both the simulator (lengths drawn
//! from a distribution) and real execution (lengths decided by the policy).

mod engine;
mod exec;
mod sim;

use std::sync::{Arc, RwLock};

use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::rng;

pub use engine::{
    Counters, EngineConfig, FiredBatch, Origin, SchedEvent, SegmentRunner, SegmentStart, StreamEngine, TaskRecord,
    TaskState, UnitKind,
};
pub use exec::{execute_rollouts, ExecConfig, PolicyRunner};
pub use sim::{
    compare_schedulers, simulate_streaming, simulate_sync, Comparison, IterationRecord, SimRunner, StreamingReport,
    SyncReport,
};

/// Response-length distribution for simulated tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthDist {
    /// `round(exp(N(mu, sigma)))`, clamped to `[1, max]`.
    LogNormal { mu: f64, sigma: f64, max: u64 },
    /// Task `i` of a wave stream gets `lengths[i % len]`.
    Cycle { lengths: Vec<u64> },
}

impl Default for LengthDist {
    fn default() -> Self {
        LengthDist::LogNormal { mu: 5.0, sigma: 1.0, max: 2000 }
    }
}

impl LengthDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            LengthDist::LogNormal { mu, sigma, max } => {
                if !mu.is_finite() || !(sigma.is_finite() && *sigma >= 0.0) || *max == 0 {
                    return Err(Error::Config(format!(
                        "lognormal lengths need finite mu, sigma >= 0 and max >= 1 (got {mu}, {sigma}, {max})"
                    )));
                }
            }
            LengthDist::Cycle { lengths } => {
                if lengths.is_empty() || lengths.contains(&0) {
                    return Err(Error::Config("cycle lengths must be non-empty and positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Length of task `index` in stream `stream`. Independent per index.
    pub fn length_at(&self, seed: u64, stream: u64, index: u64) -> u64 {
        match self {
            LengthDist::LogNormal { mu, sigma, max } => {
                let d = LogNormal::new(*mu, *sigma).expect("validated");
                let x: f64 = d.sample(&mut rng::keyed(&[seed, 0x1E46, stream, index]));
                (x.round() as u64).clamp(1, *max)
            }
            LengthDist::Cycle { lengths } => lengths[(index % lengths.len() as u64) as usize],
        }
    }
}

/// Scheduler settings shared by the simulator and the executor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrsConfig {
    /// Fraction of each batch that must come from the current snapshot.
    pub alpha_onpolicy: f64,
    pub n_main_units: usize,
    pub n_standalone_units: usize,
    pub tokens_per_unit_per_tick: f64,
    pub fp8_speedup: f64,
    pub batch_size: usize,
    pub lengths: LengthDist,
    pub pool_capacity: usize,
}

impl Default for SrsConfig {
    fn default() -> Self {
        Self {
            alpha_onpolicy: 0.8,
            n_main_units: 16,
            n_standalone_units: 2,
            tokens_per_unit_per_tick: 1.0,
            fp8_speedup: 2.0,
            batch_size: 16,
            lengths: LengthDist::default(),
            pool_capacity: 64,
        }
    }
}

impl SrsConfig {
    /// Synchronous-equivalent settings: every sample on-policy, no standalone units.
    pub fn synchronous(batch_size: usize) -> Self {
        Self {
            alpha_onpolicy: 1.0,
            n_main_units: batch_size,
            n_standalone_units: 0,
            batch_size,
            pool_capacity: batch_size.max(1),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha_onpolicy) {
            return bad(format!("alpha_onpolicy must be in [0, 1], got {}", self.alpha_onpolicy));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.n_main_units == 0 {
            return bad("n_main_units must be at least 1".into());
        }
        if self.alpha_onpolicy < 1.0 && self.n_standalone_units == 0 {
            return bad("alpha_onpolicy < 1 needs at least one standalone unit".into());
        }
        if !(self.tokens_per_unit_per_tick.is_finite() && self.tokens_per_unit_per_tick > 0.0) {
            return bad(format!("tokens_per_unit_per_tick must be positive, got {}", self.tokens_per_unit_per_tick));
        }
        if !(self.fp8_speedup.is_finite() && self.fp8_speedup >= 1.0) {
            return bad(format!("fp8_speedup must be >= 1, got {}", self.fp8_speedup));
        }
        if self.pool_capacity < self.batch_size {
            return bad(format!(
                "pool_capacity ({}) must be at least batch_size ({})",
                self.pool_capacity, self.batch_size
            ));
        }
        self.lengths.validate()
    }

    /// `ceil(alpha * batch_size)`.
    pub fn fresh_target(&self) -> usize {
        let f = (self.alpha_onpolicy * self.batch_size as f64 - 1e-9).ceil();
        (f.max(0.0) as usize).min(self.batch_size)
    }

    pub fn engine_config(&self) -> Result<EngineConfig> {
        self.validate()?;
        Ok(EngineConfig {
            batch_size: self.batch_size,
            fresh_target: self.fresh_target(),
            n_main: self.n_main_units,
            n_standalone: self.n_standalone_units,
            main_rate: self.tokens_per_unit_per_tick,
            standalone_rate: self.tokens_per_unit_per_tick * self.fp8_speedup,
            pool_capacity: self.pool_capacity,
        })
    }
}

/// Frozen policy parameters tagged with a version.
#[derive(Debug)]
pub struct PolicySnapshot<T> {
    pub version: u64,
    pub params: Arc<PolicyParams<T>>,
    pub created_at: u64,
}

/// Append-only list of snapshots. Version `i` is the `i`-th published.
#[derive(Debug, Default)]
pub struct SnapshotStore<T> {
    inner: RwLock<Vec<Arc<PolicySnapshot<T>>>>,
}

impl<T> SnapshotStore<T> {
    pub fn new() -> Self {
        Self { inner: RwLock::new(Vec::new()) }
    }

    pub fn publish(&self, params: PolicyParams<T>, created_at: u64) -> u64 {
        let mut v = self.inner.write().expect("snapshot lock poisoned");
        let version = v.len() as u64;
        v.push(Arc::new(PolicySnapshot { version, params: Arc::new(params), created_at }));
        version
    }

    pub fn get(&self, version: u64) -> Option<Arc<PolicySnapshot<T>>> {
        self.inner.read().expect("snapshot lock poisoned").get(version as usize).cloned()
    }

    pub fn latest(&self) -> Option<Arc<PolicySnapshot<T>>> {
        self.inner.read().expect("snapshot lock poisoned").last().cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("snapshot lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PoolEntry {
    pub task: usize,
    /// Newest snapshot version among the task's segments.
    pub max_version: u64,
    pub completed_at: u64,
}

impl PoolEntry {
    /// `(staleness, age, task)`; smaller pops first.
    pub fn key(&self, current_version: u64, now: u64) -> (u64, u64, usize) {
        (
            current_version.saturating_sub(self.max_version),
            now.saturating_sub(self.completed_at),
            self.task,
        )
    }
}

/// Completed trajectories waiting to fill the off-policy part of a batch.
#[derive(Debug, Clone)]
pub struct SamplePool {
    capacity: usize,
    items: Vec<PoolEntry>,
    dropped: u64,
}

impl SamplePool {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), dropped: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.items
    }

    /// Adds an entry; over capacity, the last entry in pop order is evicted
    /// and returned.
    pub fn push(&mut self, entry: PoolEntry, current_version: u64, now: u64) -> Option<PoolEntry> {
        self.items.push(entry);
        if self.items.len() <= self.capacity {
            return None;
        }
        let (idx, _) = self
            .items
            .iter()
            .enumerate()
            .max_by_key(|(_, e)| e.key(current_version, now))
            .expect("non-empty");
        self.dropped += 1;
        Some(self.items.swap_remove(idx))
    }

    pub fn pop(&mut self, current_version: u64, now: u64) -> Option<PoolEntry> {
        let (idx, _) = self
            .items
            .iter()
            .enumerate()
            .min_by_key(|(_, e)| e.key(current_version, now))?;
        Some(self.items.swap_remove(idx))
    }

    /// Pops everything, in priority order.
    pub fn drain(&mut self, current_version: u64, now: u64) -> Vec<PoolEntry> {
        let mut all = std::mem::take(&mut self.items);
        all.sort_by_key(|e| e.key(current_version, now));
        all
    }
}

/// Task ids of `entries` sorted by pop priority.
pub fn reference_order(entries: &[PoolEntry], current_version: u64, now: u64) -> Vec<usize> {
    let mut v = entries.to_vec();
    v.sort_by_key(|e| e.key(current_version, now));
    v.into_iter().map(|e| e.task).collect()
}

#[cfg(test)]
mod tests;
