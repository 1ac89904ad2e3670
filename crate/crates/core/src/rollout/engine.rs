use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::ops::Range;

use serde::Serialize;

use super::{PoolEntry, SamplePool};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub batch_size: usize,
    /// Completions from the current epoch required per batch.
    pub fresh_target: usize,
    pub n_main: usize,
    pub n_standalone: usize,
    pub main_rate: f64,
    pub standalone_rate: f64,
    pub pool_capacity: usize,
}

/// Where a task came from: its admission wave and position in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Origin {
    pub epoch: u64,
    pub slot: usize,
    pub warmup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SegmentStart {
    pub task: usize,
    pub version: u64,
    /// Tokens already generated before this segment.
    pub emitted: usize,
}

/// Produces the tokens the scheduler accounts for.
pub trait SegmentRunner {
    fn admit(&mut self, task: usize, origin: Origin) -> Result<()>;

    /// Called once per tick with every segment starting at that tick. Returns
    /// each task's total length if generation runs uninterrupted from its
    /// prefix under the given version.
    fn start_segments(&mut self, starts: &[SegmentStart]) -> Result<Vec<usize>>;

    /// The task was interrupted; keep only its first `emitted` tokens.
    fn truncate(&mut self, task: usize, emitted: usize) -> Result<()>;

    /// The task was evicted from the pool and will never be used.
    fn discard(&mut self, _task: usize) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Main,
    Standalone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Pending,
    Running,
    Parked,
    Complete,
    Consumed,
    Dropped,
}

#[derive(Debug, Clone, Copy)]
struct Running {
    kind: UnitKind,
    unit: usize,
    start_tick: u64,
    start_emitted: usize,
    planned: usize,
    version: u64,
    rate: f64,
    seq: u64,
}

#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub origin: Origin,
    pub state: TaskState,
    pub emitted: usize,
    /// `(version, token span)` per segment; spans partition `0..emitted`.
    pub segments: Vec<(u64, Range<usize>)>,
    pub completed_at: Option<u64>,
    running: Option<Running>,
}

impl TaskRecord {
    pub fn max_version(&self) -> Option<u64> {
        self.segments.iter().map(|s| s.0).max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SchedEvent {
    Admit { tick: u64, task: usize, epoch: u64, warmup: bool },
    Start { tick: u64, task: usize, unit: UnitKind, index: usize, version: u64, emitted: usize },
    Complete { tick: u64, task: usize, length: usize },
    Park { tick: u64, task: usize, emitted: usize },
    Drop { tick: u64, task: usize },
    Fire { tick: u64, epoch: u64, version: u64, fresh: Vec<usize>, pooled: Vec<usize> },
}

/// Task counts. `admitted = consumed + waiting + in_flight + dropped`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub admitted: usize,
    pub consumed: usize,
    /// Complete but not yet trained on.
    pub waiting: usize,
    pub in_flight: usize,
    pub dropped: usize,
}

impl Counters {
    pub fn balanced(&self) -> bool {
        self.admitted == self.consumed + self.waiting + self.in_flight + self.dropped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiredBatch {
    pub epoch: u64,
    pub version: u64,
    pub tick: u64,
    pub iteration_time: u64,
    pub fresh: Vec<usize>,
    pub pooled: Vec<usize>,
    /// Per member, fresh first: current version minus the newest segment version.
    pub staleness: Vec<u64>,
    pub main_idle_fraction: f64,
}

impl FiredBatch {
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.fresh.iter().chain(&self.pooled).copied()
    }
}

/// Event-driven streaming scheduler.
///
/// Each epoch admits `batch_size` tasks to the main units under the current
/// version. A batch fires once `fresh_target` of them have completed and the
/// remainder can be filled from the pool; surplus fresh completions go to the
/// pool. [`StreamEngine::bump`] then parks every unfinished main task on the
/// standalone queue, where it continues under whatever version is current
/// when a standalone unit picks it up. When `fresh_target < batch_size`,
/// [`StreamEngine::start`] first runs one synchronous warm-up wave straight
/// into the pool.
#[derive(Debug, Clone)]
pub struct StreamEngine {
    cfg: EngineConfig,
    now: u64,
    epoch: u64,
    version: u64,
    tasks: Vec<TaskRecord>,
    events: BinaryHeap<Reverse<(u64, u64, usize)>>,
    seq: u64,
    main_units: Vec<Option<usize>>,
    standalone_units: Vec<Option<usize>>,
    main_queue: VecDeque<usize>,
    park_queue: VecDeque<usize>,
    fresh: Vec<usize>,
    pool: SamplePool,
    main_busy: u64,
    last_fire: u64,
    started: bool,
    awaiting_bump: bool,
    log: Vec<SchedEvent>,
    record_log: bool,
}

impl StreamEngine {
    pub fn new(cfg: EngineConfig, version: u64) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.n_main == 0 || cfg.fresh_target > cfg.batch_size {
            return Err(Error::Config("engine needs batch_size >= 1, n_main >= 1, fresh_target <= batch_size".into()));
        }
        if cfg.fresh_target < cfg.batch_size && cfg.n_standalone == 0 {
            return Err(Error::Config("off-policy batches need at least one standalone unit".into()));
        }
        if !(cfg.main_rate > 0.0 && cfg.standalone_rate > 0.0) {
            return Err(Error::Config("unit rates must be positive".into()));
        }
        Ok(Self {
            main_units: vec![None; cfg.n_main],
            standalone_units: vec![None; cfg.n_standalone],
            pool: SamplePool::new(cfg.pool_capacity),
            cfg,
            now: 0,
            epoch: 0,
            version,
            tasks: Vec::new(),
            events: BinaryHeap::new(),
            seq: 0,
            main_queue: VecDeque::new(),
            park_queue: VecDeque::new(),
            fresh: Vec::new(),
            main_busy: 0,
            last_fire: 0,
            started: false,
            awaiting_bump: false,
            log: Vec::new(),
            record_log: true,
        })
    }

    /// Disables the event log (it grows with every task).
    pub fn without_log(mut self) -> Self {
        self.record_log = false;
        self
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn task(&self, id: usize) -> &TaskRecord {
        &self.tasks[id]
    }

    pub fn tasks(&self) -> &[TaskRecord] {
        &self.tasks
    }

    pub fn log(&self) -> &[SchedEvent] {
        &self.log
    }

    pub fn pool(&self) -> &SamplePool {
        &self.pool
    }

    pub fn counters(&self) -> Counters {
        let mut c = Counters { admitted: self.tasks.len(), consumed: 0, waiting: 0, in_flight: 0, dropped: 0 };
        for t in &self.tasks {
            match t.state {
                TaskState::Pending | TaskState::Running | TaskState::Parked => c.in_flight += 1,
                TaskState::Complete => c.waiting += 1,
                TaskState::Consumed => c.consumed += 1,
                TaskState::Dropped => c.dropped += 1,
            }
        }
        c
    }

    fn emit(&mut self, e: SchedEvent) {
        if self.record_log {
            self.log.push(e);
        }
    }

    /// Runs the warm-up wave if needed, then admits the first epoch.
    /// Returns the warm-up duration in ticks.
    pub fn start<R: SegmentRunner>(&mut self, runner: &mut R) -> Result<u64> {
        if self.started {
            return Err(Error::invalid("engine already started"));
        }
        self.started = true;
        if self.cfg.fresh_target < self.cfg.batch_size {
            let first = self.tasks.len();
            self.admit_wave(runner, true)?;
            self.dispatch(runner)?;
            while self.tasks[first..].iter().any(|t| t.state != TaskState::Complete && t.state != TaskState::Dropped) {
                if !self.advance(runner)? {
                    return Err(self.stall());
                }
            }
        }
        self.last_fire = self.now;
        self.main_busy = 0;
        self.admit_wave(runner, false)?;
        self.dispatch(runner)?;
        Ok(self.now)
    }

    /// Advances time until a batch can fire and returns it.
    pub fn next_batch<R: SegmentRunner>(&mut self, runner: &mut R) -> Result<FiredBatch> {
        if !self.started {
            return Err(Error::invalid("engine not started"));
        }
        if self.awaiting_bump {
            return Err(Error::invalid("bump the engine before requesting another batch"));
        }
        let (b, f) = (self.cfg.batch_size, self.cfg.fresh_target);
        loop {
            if self.fresh.len() >= f && self.fresh.len() - f + self.pool.len() >= b - f {
                return Ok(self.fire(runner));
            }
            if !self.advance(runner)? {
                return Err(self.stall());
            }
        }
    }

    /// Starts a new epoch under `version`: parks unfinished main tasks and
    /// admits the next wave.
    pub fn bump<R: SegmentRunner>(&mut self, runner: &mut R, version: u64) -> Result<()> {
        if !self.awaiting_bump {
            return Err(Error::invalid("no batch has fired since the last bump"));
        }
        if version < self.version {
            return Err(Error::invalid(format!("version went backwards: {} -> {version}", self.version)));
        }
        self.awaiting_bump = false;
        for unit in 0..self.main_units.len() {
            let Some(task) = self.main_units[unit].take() else { continue };
            let run = self.tasks[task].running.take().expect("running task");
            let progressed = ((self.now - run.start_tick) as f64 * run.rate + 1e-9).floor() as usize;
            let emitted = (run.start_emitted + progressed).min(run.planned - 1);
            if emitted > run.start_emitted {
                self.tasks[task].segments.push((run.version, run.start_emitted..emitted));
            }
            self.tasks[task].emitted = emitted;
            self.tasks[task].state = TaskState::Parked;
            runner.truncate(task, emitted)?;
            self.park_queue.push_back(task);
            self.emit(SchedEvent::Park { tick: self.now, task, emitted });
        }
        while let Some(task) = self.main_queue.pop_front() {
            self.tasks[task].state = TaskState::Parked;
            self.park_queue.push_back(task);
            let emitted = self.tasks[task].emitted;
            self.emit(SchedEvent::Park { tick: self.now, task, emitted });
        }
        self.epoch += 1;
        self.version = version;
        self.admit_wave(runner, false)?;
        self.dispatch(runner)
    }

    fn stall(&self) -> Error {
        Error::Stall { tick: self.now, fresh: self.fresh.len(), pooled: self.pool.len() }
    }

    fn admit_wave<R: SegmentRunner>(&mut self, runner: &mut R, warmup: bool) -> Result<()> {
        for slot in 0..self.cfg.batch_size {
            let id = self.tasks.len();
            let origin = Origin { epoch: self.epoch, slot, warmup };
            runner.admit(id, origin)?;
            self.tasks.push(TaskRecord {
                origin,
                state: TaskState::Pending,
                emitted: 0,
                segments: Vec::new(),
                completed_at: None,
                running: None,
            });
            self.main_queue.push_back(id);
            self.emit(SchedEvent::Admit { tick: self.now, task: id, epoch: self.epoch, warmup });
        }
        Ok(())
    }

    fn dispatch<R: SegmentRunner>(&mut self, runner: &mut R) -> Result<()> {
        let mut starts = Vec::new();
        let mut placed = Vec::new();
        for unit in 0..self.main_units.len() {
            if self.main_units[unit].is_none() {
                let Some(task) = self.main_queue.pop_front() else { break };
                self.main_units[unit] = Some(task);
                placed.push((UnitKind::Main, unit));
                starts.push(SegmentStart { task, version: self.version, emitted: self.tasks[task].emitted });
            }
        }
        for unit in 0..self.standalone_units.len() {
            if self.standalone_units[unit].is_none() {
                let Some(task) = self.park_queue.pop_front() else { break };
                self.standalone_units[unit] = Some(task);
                placed.push((UnitKind::Standalone, unit));
                starts.push(SegmentStart { task, version: self.version, emitted: self.tasks[task].emitted });
            }
        }
        if starts.is_empty() {
            return Ok(());
        }
        let totals = runner.start_segments(&starts)?;
        if totals.len() != starts.len() {
            return Err(Error::invalid("runner returned the wrong number of lengths"));
        }
        for ((s, &(kind, unit)), planned) in starts.iter().zip(&placed).zip(totals) {
            if planned <= s.emitted {
                return Err(Error::invalid(format!(
                    "task {} cannot finish at length {planned} after {} tokens",
                    s.task, s.emitted
                )));
            }
            let rate = match kind {
                UnitKind::Main => self.cfg.main_rate,
                UnitKind::Standalone => self.cfg.standalone_rate,
            };
            let ticks = (((planned - s.emitted) as f64 / rate) - 1e-9).ceil().max(1.0) as u64;
            self.seq += 1;
            self.events.push(Reverse((self.now + ticks, self.seq, s.task)));
            let t = &mut self.tasks[s.task];
            t.state = TaskState::Running;
            t.running = Some(Running {
                kind,
                unit,
                start_tick: self.now,
                start_emitted: s.emitted,
                planned,
                version: s.version,
                rate,
                seq: self.seq,
            });
            self.emit(SchedEvent::Start {
                tick: self.now,
                task: s.task,
                unit: kind,
                index: unit,
                version: s.version,
                emitted: s.emitted,
            });
        }
        Ok(())
    }

    /// Processes every completion at the next event tick. `false` if idle.
    fn advance<R: SegmentRunner>(&mut self, runner: &mut R) -> Result<bool> {
        let Some(&Reverse((tick, _, _))) = self.events.peek() else { return Ok(false) };
        self.now = tick;
        let mut progressed = false;
        while let Some(&Reverse((t, seq, task))) = self.events.peek() {
            if t != tick {
                break;
            }
            self.events.pop();
            let live = matches!(self.tasks[task].running, Some(r) if r.seq == seq);
            if live {
                self.complete(runner, task);
                progressed = true;
            }
        }
        self.dispatch(runner)?;
        Ok(progressed || !self.events.is_empty())
    }

    fn complete<R: SegmentRunner>(&mut self, runner: &mut R, task: usize) {
        let run = self.tasks[task].running.take().expect("live event");
        let t = &mut self.tasks[task];
        t.segments.push((run.version, run.start_emitted..run.planned));
        t.emitted = run.planned;
        t.state = TaskState::Complete;
        t.completed_at = Some(self.now);
        let warmup = t.origin.warmup;
        self.emit(SchedEvent::Complete { tick: self.now, task, length: run.planned });
        match run.kind {
            UnitKind::Main => {
                self.main_units[run.unit] = None;
                if warmup {
                    self.pool_completed(runner, task);
                } else {
                    self.main_busy += self.now - run.start_tick;
                    self.fresh.push(task);
                }
            }
            UnitKind::Standalone => {
                self.standalone_units[run.unit] = None;
                self.pool_completed(runner, task);
            }
        }
    }

    fn pool_completed<R: SegmentRunner>(&mut self, runner: &mut R, task: usize) {
        let entry = PoolEntry {
            task,
            max_version: self.tasks[task].max_version().unwrap_or(self.version),
            completed_at: self.now,
        };
        if let Some(evicted) = self.pool.push(entry, self.version, self.now) {
            self.tasks[evicted.task].state = TaskState::Dropped;
            runner.discard(evicted.task);
            self.emit(SchedEvent::Drop { tick: self.now, task: evicted.task });
        }
    }

    fn fire<R: SegmentRunner>(&mut self, runner: &mut R) -> FiredBatch {
        let (b, f) = (self.cfg.batch_size, self.cfg.fresh_target);
        let fresh: Vec<usize> = self.fresh.drain(..f).collect();
        let extra: Vec<usize> = std::mem::take(&mut self.fresh);
        for task in extra {
            self.pool_completed(runner, task);
        }
        let pooled: Vec<usize> = (0..b - f)
            .map(|_| self.pool.pop(self.version, self.now).expect("fire condition checked").task)
            .collect();
        let staleness = fresh
            .iter()
            .chain(&pooled)
            .map(|&t| self.version.saturating_sub(self.tasks[t].max_version().unwrap_or(self.version)))
            .collect();
        for &t in fresh.iter().chain(&pooled) {
            self.tasks[t].state = TaskState::Consumed;
        }
        let running_busy: u64 = self
            .main_units
            .iter()
            .flatten()
            .map(|&t| self.now - self.tasks[t].running.expect("running").start_tick)
            .sum();
        let busy = self.main_busy + running_busy;
        let span = self.now - self.last_fire;
        let idle_ticks = (self.cfg.n_main as u64 * span).saturating_sub(busy);
        let idle = if span == 0 { 0.0 } else { idle_ticks as f64 / (self.cfg.n_main as f64 * span as f64) };
        self.main_busy = 0;
        self.last_fire = self.now;
        self.awaiting_bump = true;
        self.emit(SchedEvent::Fire {
            tick: self.now,
            epoch: self.epoch,
            version: self.version,
            fresh: fresh.clone(),
            pooled: pooled.clone(),
        });
        FiredBatch {
            epoch: self.epoch,
            version: self.version,
            tick: self.now,
            iteration_time: span,
            fresh,
            pooled,
            staleness,
            main_idle_fraction: idle,
        }
    }
}
