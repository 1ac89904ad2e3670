use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;

use super::engine::{Origin, SegmentRunner, SegmentStart, StreamEngine};
use super::{SnapshotStore, SrsConfig};
use crate::error::{Error, Result};
use crate::policy::Decoding;
use crate::rng;
use crate::scalar::Scalar;
use crate::trajectory::{Prompt, Trajectory};

/// Generates real responses for the engine. Each segment is generated to
/// completion with the snapshot current at its start; parking truncates it.
/// Token draws are keyed by `(seed, prompt id, attempt)` and token position.
pub struct PolicyRunner<'a, T> {
    store: &'a SnapshotStore<T>,
    max_len: usize,
    seed: u64,
    decoding: Decoding,
    pending: VecDeque<(Arc<Prompt>, u32)>,
    trajs: Vec<Option<Trajectory<T>>>,
}

impl<'a, T: Scalar> PolicyRunner<'a, T> {
    pub fn new(store: &'a SnapshotStore<T>, max_len: usize, seed: u64, decoding: Decoding) -> Self {
        Self { store, max_len, seed, decoding, pending: VecDeque::new(), trajs: Vec::new() }
    }

    /// Queues `(prompt, attempt)` pairs for upcoming admissions, in order.
    pub fn queue(&mut self, items: impl IntoIterator<Item = (Arc<Prompt>, u32)>) {
        self.pending.extend(items);
    }

    pub fn queued(&self) -> usize {
        self.pending.len()
    }

    pub fn get(&self, task: usize) -> Option<&Trajectory<T>> {
        self.trajs.get(task).and_then(Option::as_ref)
    }

    /// Hands over a finished trajectory.
    pub fn take(&mut self, task: usize) -> Result<Trajectory<T>> {
        self.trajs
            .get_mut(task)
            .and_then(Option::take)
            .ok_or_else(|| Error::invalid(format!("no trajectory held for task {task}")))
    }

    pub fn response_seed(&self, prompt: &Prompt, attempt: u32) -> u64 {
        rng::mix(&[self.seed, prompt.id, u64::from(attempt)])
    }
}

impl<T: Scalar> SegmentRunner for PolicyRunner<'_, T> {
    fn admit(&mut self, task: usize, _origin: Origin) -> Result<()> {
        let (prompt, attempt) = self
            .pending
            .pop_front()
            .ok_or_else(|| Error::invalid("no prompt queued for admission"))?;
        if self.trajs.len() <= task {
            self.trajs.resize_with(task + 1, || None);
        }
        self.trajs[task] = Some(Trajectory::empty(prompt, attempt));
        Ok(())
    }

    fn start_segments(&mut self, starts: &[SegmentStart]) -> Result<Vec<usize>> {
        let mut work = Vec::with_capacity(starts.len());
        for s in starts {
            let snap = self
                .store
                .get(s.version)
                .ok_or_else(|| Error::invalid(format!("snapshot {} not published", s.version)))?;
            let traj = self.take(s.task)?;
            let seed = self.response_seed(&traj.prompt, traj.attempt);
            work.push((s.task, s.version, snap, traj, seed));
        }
        let (max_len, decoding) = (self.max_len, self.decoding);
        let results: Vec<Result<()>> = work
            .par_iter_mut()
            .map(|(_, version, snap, traj, seed)| snap.params.extend(*version, traj, max_len, *seed, None, decoding))
            .collect();
        let mut lengths = Vec::with_capacity(work.len());
        for ((task, _, _, traj, _), r) in work.into_iter().zip(results) {
            r?;
            lengths.push(traj.len());
            self.trajs[task] = Some(traj);
        }
        Ok(lengths)
    }

    fn truncate(&mut self, task: usize, emitted: usize) -> Result<()> {
        let t = self.trajs[task]
            .as_mut()
            .ok_or_else(|| Error::invalid(format!("no trajectory held for task {task}")))?;
        t.tokens.truncate(emitted);
        t.behavior_logprobs.truncate(emitted);
        t.versions.truncate(emitted);
        t.truncated = false;
        Ok(())
    }

    fn discard(&mut self, task: usize) {
        if let Some(slot) = self.trajs.get_mut(task) {
            *slot = None;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecConfig {
    pub srs: SrsConfig,
    pub max_len: usize,
    pub seed: u64,
    pub decoding: Decoding,
}

/// Runs one batch per published snapshot, oldest first, admitting every
/// prompt once per wave (attempt = wave index). Returns the batch that fires
/// under the latest snapshot, fresh members first.
pub fn execute_rollouts<T: Scalar>(
    store: &SnapshotStore<T>,
    prompts: &[Arc<Prompt>],
    cfg: &ExecConfig,
) -> Result<Vec<Trajectory<T>>> {
    if store.is_empty() {
        return Err(Error::invalid("no policy snapshot published"));
    }
    if prompts.is_empty() {
        return Err(Error::invalid("no prompts to roll out"));
    }
    let mut srs = cfg.srs.clone();
    srs.batch_size = prompts.len();
    srs.pool_capacity = srs.pool_capacity.max(prompts.len());
    let mut engine = StreamEngine::new(srs.engine_config()?, 0)?.without_log();
    let mut runner = PolicyRunner::new(store, cfg.max_len, cfg.seed, cfg.decoding);
    let warm = usize::from(srs.fresh_target() < srs.batch_size);
    let versions = store.len();
    for wave in 0..versions + warm {
        runner.queue(prompts.iter().map(|p| (Arc::clone(p), wave as u32)));
    }
    engine.start(&mut runner)?;
    for v in 0..versions as u64 {
        let batch = engine.next_batch(&mut runner)?;
        if v + 1 == versions as u64 {
            return batch.members().map(|t| runner.take(t)).collect();
        }
        engine.bump(&mut runner, v + 1)?;
    }
    unreachable!("store is non-empty")
}
