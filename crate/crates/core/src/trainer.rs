//! Value pretraining, the RL loop and evaluation.
//!
//! Each step draws prompts from the adaptive cell distribution, collects
//! `group_size` responses per prompt through the rollout engine, scores them,
//! drops groups with uniform outcomes, balances the survivors into
//! micro-batches and applies one plain gradient-descent update with the
//! combined loss. Metrics are one JSON object per line. Wall-clock time is
//! written to a separate stream so metrics stay reproducible.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::advantage::{assign_estimates, monte_carlo_returns};
use crate::batching::{balance_metric, karp_partition, MicroBatchPlan};
use crate::checkpoint::{self, CheckpointMeta};
use crate::config::RLConfig;
use crate::envs::{self, pairwise_preference, TaskId};
use crate::error::{Error, Result};
use crate::objective::{combined_loss_with_grads, LossBreakdown, Normalizers};
use crate::policy::{Decoding, PolicyParams};
use crate::rng;
use crate::rollout::{PolicyRunner, SnapshotStore, StreamEngine};
use crate::sampler::{self, dynamic_filter, update_distribution, DomainStats, PromptGroup};
use crate::trajectory::{Prompt, Trajectory};

const TAG_INIT: u64 = 0x1417;
const TAG_PRETRAIN: u64 = 0x9E7A;
const TAG_WAVE: u64 = 0x3A5E;
const TAG_ROLLOUT: u64 = 0x20B0;
const TAG_PREFERENCE: u64 = 0x94EF;
const TAG_EVAL: u64 = 0xE7A1;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const CHECKPOINT_FILE: &str = "final.ckpt";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOptions {
    pub steps: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub max_len: usize,
    pub seed: u64,
    pub decoding: Decoding,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrainReport {
    pub steps: usize,
    /// Mean squared error before the first and after the last update.
    pub initial_mse: Option<f64>,
    pub final_mse: Option<f64>,
}

fn value_mse(params: &PolicyParams<f64>, trajs: &[Trajectory<f64>], returns: &[Vec<f64>]) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut n = 0;
    for (t, g) in trajs.iter().zip(returns) {
        let (_, values) = params.forward(t)?;
        sum += values.iter().zip(g).map(|(v, r)| (v - r) * (v - r)).sum::<f64>();
        n += t.len();
    }
    Ok((sum / n.max(1) as f64, n))
}

/// Fits the value head to Monte-Carlo returns of responses sampled from the
/// frozen policy. `prompts(step)` supplies `(prompt, attempt)` pairs and
/// `reward` scores a finished response. Only value parameters change.
pub fn pretrain_values<F, R>(
    params: &mut PolicyParams<f64>,
    opts: &PretrainOptions,
    mut prompts: F,
    reward: R,
) -> Result<PretrainReport>
where
    F: FnMut(usize) -> Result<Vec<(Arc<Prompt>, u32)>>,
    R: Fn(&Trajectory<f64>) -> f64 + Sync,
{
    let policy_before: Vec<u64> = params.as_slice()[params.policy_range()].iter().map(|x| x.to_bits()).collect();
    let mut report = PretrainReport { steps: opts.steps, initial_mse: None, final_mse: None };
    for step in 0..opts.steps {
        let pairs = prompts(step)?;
        let frozen = &*params;
        let trajs: Vec<Trajectory<f64>> = pairs
            .par_iter()
            .map(|(p, a)| {
                let mut t = Trajectory::empty(Arc::clone(p), *a);
                let seed = rng::mix(&[opts.seed, TAG_PRETRAIN, step as u64, p.id, u64::from(*a)]);
                frozen.extend(0, &mut t, opts.max_len, seed, None, opts.decoding)?;
                t.reward = reward(&t);
                Ok(t)
            })
            .collect::<Result<_>>()?;
        let returns: Vec<Vec<f64>> = trajs
            .iter()
            .map(|t| monte_carlo_returns(&t.token_rewards(), opts.gamma))
            .collect::<Result<_>>()?;
        let (mse, n) = value_mse(params, &trajs, &returns)?;
        report.initial_mse.get_or_insert(mse);
        let mut grad = PolicyParams::zeros(*params.shape())?;
        for (t, g) in trajs.iter().zip(&returns) {
            let (_, values) = params.forward(t)?;
            let vw: Vec<f64> = values.iter().zip(g).map(|(v, r)| 2.0 * (v - r) / n as f64).collect();
            params.backward(t, &vec![0.0; t.len()], &vw, &mut grad)?;
        }
        let range = params.value_range();
        let g = grad.as_slice()[range.clone()].to_vec();
        for (x, d) in params.as_mut_slice()[range].iter_mut().zip(g) {
            *x -= opts.learning_rate * d;
        }
        if !params.is_finite() {
            return Err(Error::NumericalAbort { step, detail: "value pretraining diverged".into() });
        }
        if step + 1 == opts.steps {
            report.final_mse = Some(value_mse(params, &trajs, &returns)?.0);
        }
    }
    let unchanged = params.as_slice()[params.policy_range()]
        .iter()
        .zip(&policy_before)
        .all(|(x, b)| x.to_bits() == *b);
    assert!(unchanged, "value pretraining modified policy parameters");
    Ok(report)
}

fn wave_prompts(stats: &DomainStats, cfg: &RLConfig, wave: u64) -> Result<Vec<(Arc<Prompt>, u32)>> {
    let seed = rng::mix(&[cfg.seed, TAG_WAVE, wave]);
    let instances = sampler::sample_prompts(stats, cfg.prompts_per_step, seed)?;
    let mut out = Vec::with_capacity(cfg.batch_size());
    for (i, inst) in instances.into_iter().enumerate() {
        let prompt = Arc::new(Prompt::from_instance(rng::mix(&[seed, i as u64]), inst));
        out.extend((0..cfg.group_size as u32).map(|a| (Arc::clone(&prompt), a)));
    }
    Ok(out)
}

fn verifier_reward(t: &Trajectory<f64>) -> f64 {
    match &t.prompt.instance {
        Some(inst) => envs::reward_from_verdict(&envs::verify(inst, &t.answer_text())),
        None => 0.0,
    }
}

/// Value pretraining on the configured cells with verifier rewards.
pub fn value_pretrain(params: &mut PolicyParams<f64>, cfg: &RLConfig) -> Result<PretrainReport> {
    let stats = DomainStats::new(&cfg.cells(), cfg.ema_beta, cfg.weight_floor)?;
    let opts = PretrainOptions {
        steps: cfg.value_pretrain_steps,
        learning_rate: cfg.value_pretrain_learning_rate,
        gamma: cfg.gamma,
        max_len: cfg.max_response_len,
        seed: cfg.seed,
        decoding: Decoding::Sample,
    };
    pretrain_values(
        params,
        &opts,
        |step| wave_prompts(&stats, cfg, rng::mix(&[TAG_PRETRAIN, step as u64])),
        verifier_reward,
    )
}

/// Freshly initialized parameters for `cfg`, before value pretraining.
pub fn initial_params(cfg: &RLConfig) -> Result<PolicyParams<f64>> {
    PolicyParams::init(cfg.shape()?, cfg.policy.init_scale, rng::mix(&[cfg.seed, TAG_INIT]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub loss: LossBreakdown<f64>,
    pub plan: MicroBatchPlan,
    pub balance: f64,
    pub grad_norm: f64,
}

/// One optimizer step on `batch`: refresh log-probs and values under the
/// current parameters, estimate advantages, accumulate the combined-loss
/// gradient over balanced micro-batches, then `params -= lr * grad`.
pub fn update_step(
    params: &mut PolicyParams<f64>,
    batch: &mut [Trajectory<f64>],
    cfg: &RLConfig,
    step: usize,
) -> Result<UpdateReport> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let gae = cfg.gae()?;
    let loss_cfg = cfg.loss()?;
    for t in batch.iter_mut() {
        params.refresh(t)?;
        if !t.current_logprobs.iter().chain(&t.values).all(|x| x.is_finite()) {
            return Err(Error::NumericalAbort { step, detail: "non-finite log-prob or value prediction".into() });
        }
        assign_estimates(t, &gae)?;
    }
    let lengths: Vec<u64> = batch.iter().map(|t| t.len() as u64).collect();
    let plan = karp_partition(&lengths, cfg.micro_batches.min(batch.len()))?;
    let norm = Normalizers::of(batch, loss_cfg.positive_threshold);
    let mut grad = PolicyParams::zeros(*params.shape())?;
    let mut total = LossBreakdown::zero();
    for members in plan.members() {
        if members.is_empty() {
            continue;
        }
        let micro: Vec<Trajectory<f64>> = members.iter().map(|&i| batch[i].clone()).collect();
        let (loss, grads) = combined_loss_with_grads(&micro, &loss_cfg, Some(norm))?;
        total.accumulate(&loss);
        for (t, g) in micro.iter().zip(&grads) {
            params.backward(t, &g.logp, &g.value, &mut grad)?;
        }
    }
    if !total.total.is_finite() {
        return Err(Error::NumericalAbort { step, detail: format!("non-finite loss {}", total.total) });
    }
    if !grad.is_finite() {
        return Err(Error::NumericalAbort { step, detail: "non-finite gradient".into() });
    }
    let grad_norm = grad.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = if cfg.max_grad_norm > 0.0 && grad_norm > cfg.max_grad_norm { cfg.max_grad_norm / grad_norm } else { 1.0 };
    params.axpy(-cfg.learning_rate * scale, &grad);
    if !params.is_finite() {
        return Err(Error::NumericalAbort { step, detail: "non-finite parameters after update".into() });
    }
    Ok(UpdateReport { balance: balance_metric(&plan), loss: total, plan, grad_norm })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMetrics {
    pub cell: String,
    pub pass_rate: Option<f64>,
    pub ema: f64,
    pub weight: f64,
}

/// One record per optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub step: usize,
    pub version: u64,
    pub ppo_loss: f64,
    pub value_loss: f64,
    pub nll_loss: f64,
    pub total_loss: f64,
    pub tokens: usize,
    pub mean_response_len: f64,
    pub max_response_len: usize,
    pub batch_pass_rate: f64,
    pub cells: Vec<CellMetrics>,
    pub groups_seen: usize,
    pub groups_retained: usize,
    pub groups_filtered: usize,
    pub resample_rounds: usize,
    pub retained_fraction: f64,
    pub micro_batches: usize,
    pub micro_batch_loads: Vec<u64>,
    pub balance: f64,
    pub staleness: BTreeMap<u64, usize>,
    pub rollout_ticks: u64,
    pub preference_step: bool,
    pub grad_norm: f64,
    pub eval_pass_at_1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: TaskId,
    pub difficulty: u8,
    pub instances: usize,
    pub n: usize,
    pub k: usize,
    pub avg_at_k: f64,
    pub pass_at_k: f64,
    pub best_of_k: f64,
}

/// Response cap that fits every reference solution of the cell.
pub fn default_eval_len(task: TaskId, difficulty: u8) -> usize {
    let d = difficulty as usize;
    match task {
        TaskId::Maze => (d + 1) * (d + 1) + 1,
        TaskId::TwentyFour => 6 * (d + 1) + 2,
        TaskId::Sudoku4 => 17,
    }
}

/// Samples `n` responses for each of `instances` fresh instances and reports
/// the mean avg@k, pass@k and best-of-k.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_params(
    params: &PolicyParams<f64>,
    task: TaskId,
    difficulty: u8,
    n: usize,
    k: usize,
    seed: u64,
    instances: usize,
    max_len: usize,
) -> Result<EvalReport> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("evaluation needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if instances == 0 {
        return Err(Error::invalid("evaluation needs at least one instance"));
    }
    let outcomes: Vec<Vec<bool>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let inst = envs::generate(task, difficulty, rng::mix(&[seed, TAG_EVAL, i as u64]))?;
            let prompt = Arc::new(Prompt::from_instance(rng::mix(&[seed, TAG_EVAL, 1, i as u64]), inst));
            (0..n)
                .map(|a| {
                    let t = params.rollout(0, &prompt, max_len, rng::mix(&[seed, prompt.id, a as u64]))?;
                    Ok(verifier_reward(&t) > 0.5)
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<_>>()?;
    summarize(task, difficulty, &outcomes, k)
}

/// Aggregates per-instance outcome lists.
pub fn summarize(task: TaskId, difficulty: u8, outcomes: &[Vec<bool>], k: usize) -> Result<EvalReport> {
    let m = outcomes.len().max(1) as f64;
    let mut avg = 0.0;
    let mut pass = 0.0;
    let mut best = 0.0;
    for o in outcomes {
        avg += sampler::avg_at_k::<f64>(o)?;
        pass += sampler::pass_at_k::<f64>(o, k)?;
        best += f64::from(u8::from(sampler::best_of_k(o, k)?));
    }
    Ok(EvalReport {
        task,
        difficulty,
        instances: outcomes.len(),
        n: outcomes.first().map_or(0, Vec::len),
        k,
        avg_at_k: avg / m,
        pass_at_k: pass / m,
        best_of_k: best / m,
    })
}

/// Loads a checkpoint and evaluates it with the default cap and 100 instances.
pub fn evaluate(ckpt: &Path, task: TaskId, difficulty: u8, n: usize, k: usize, seed: u64) -> Result<EvalReport> {
    let (params, _) = checkpoint::load::<f64>(ckpt)?;
    evaluate_params(&params, task, difficulty, n, k, seed, 100, default_eval_len(task, difficulty))
}

/// Held-out pass@1 averaged over the configured cells.
pub fn held_out_pass_at_1(params: &PolicyParams<f64>, cfg: &RLConfig) -> Result<f64> {
    let cells = cfg.cells();
    let mut sum = 0.0;
    for c in &cells {
        let seed = rng::mix(&[cfg.seed, TAG_EVAL, c.task.index() as u64, u64::from(c.difficulty)]);
        let r = evaluate_params(params, c.task, c.difficulty, 4, 1, seed, cfg.eval_instances, cfg.max_response_len)?;
        sum += r.pass_at_k;
    }
    Ok(sum / cells.len() as f64)
}

fn preference_rewards(groups: &mut [PromptGroup<f64>], seed: u64) {
    for g in groups {
        let answers: Vec<String> = g.trajectories.iter().map(Trajectory::answer_text).collect();
        let rubric = rng::mix(&[seed, TAG_PREFERENCE, g.prompt.id]);
        for (i, t) in g.trajectories.iter_mut().enumerate() {
            let others: Vec<f64> = (0..answers.len())
                .filter(|&j| j != i)
                .map(|j| pairwise_preference(&answers[i], &answers[j], rubric))
                .collect();
            t.reward = if others.is_empty() { 0.5 } else { others.iter().sum::<f64>() / others.len() as f64 };
        }
        g.refresh_accuracy();
    }
}

/// Groups trajectories by prompt, in order of first appearance.
fn group_by_prompt(trajs: Vec<Trajectory<f64>>) -> Result<Vec<PromptGroup<f64>>> {
    let mut order: Vec<u64> = Vec::new();
    let mut by_id: BTreeMap<u64, Vec<Trajectory<f64>>> = BTreeMap::new();
    for t in trajs {
        let id = t.prompt.id;
        if !by_id.contains_key(&id) {
            order.push(id);
        }
        by_id.entry(id).or_default().push(t);
    }
    order
        .into_iter()
        .map(|id| {
            let ts = by_id.remove(&id).expect("grouped");
            PromptGroup::new(Arc::clone(&ts[0].prompt), ts)
        })
        .collect()
}

fn cell_metrics(stats: &DomainStats, groups: &[PromptGroup<f64>]) -> Vec<CellMetrics> {
    stats
        .cells
        .iter()
        .map(|c| {
            let (mut hits, mut total) = (0usize, 0usize);
            for g in groups.iter().filter(|g| g.cell() == Some(c.cell)) {
                hits += g.successes();
                total += g.trajectories.len();
            }
            CellMetrics {
                cell: c.cell.to_string(),
                pass_rate: (total > 0).then(|| hits as f64 / total as f64),
                ema: c.ema,
                weight: c.weight,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    #[serde(skip)]
    pub params: PolicyParams<f64>,
    pub steps: usize,
    pub pretrain: PretrainReport,
    pub final_pass_at_1: Option<f64>,
    pub config_hash: u64,
}

fn write_record<W: Write + ?Sized, S: Serialize>(out: &mut W, rec: &S) -> Result<()> {
    serde_json::to_writer(&mut *out, rec)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AbortRecord<'a> {
    step: usize,
    abort: &'a str,
}

#[derive(Serialize)]
struct TimingRecord {
    step: usize,
    wall_ms: f64,
}

/// Runs value pretraining and the RL loop, writing one metrics record per
/// step to `metrics` and wall-clock timings to `timing`.
pub fn run_training(
    cfg: &RLConfig,
    metrics: &mut dyn Write,
    mut timing: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let config_hash = checkpoint::config_hash(&cfg.to_toml_string());
    let mut params = initial_params(cfg)?;
    let pretrain = value_pretrain(&mut params, cfg)?;

    let store = SnapshotStore::new();
    let mut version = store.publish(params.clone(), 0);
    let mut stats = DomainStats::new(&cfg.cells(), cfg.ema_beta, cfg.weight_floor)?;
    let srs = cfg.srs()?;
    let mut engine = StreamEngine::new(srs.engine_config()?, version)?.without_log();
    let mut runner = PolicyRunner::new(&store, cfg.max_response_len, rng::mix(&[cfg.seed, TAG_ROLLOUT]), Decoding::Sample);
    let mut wave = 0u64;
    let waves_at_start = if srs.fresh_target() < srs.batch_size { 2 } else { 1 };
    for _ in 0..waves_at_start {
        runner.queue(wave_prompts(&stats, cfg, wave)?);
        wave += 1;
    }
    engine.start(&mut runner)?;

    let mut final_pass = None;
    for step in 0..cfg.total_steps {
        let started = Instant::now();
        let preference_step = cfg.preference_fraction > 0.0
            && rng::uniform_at(&[cfg.seed, TAG_PREFERENCE], step as u64) < cfg.preference_fraction;
        let mut seen: Vec<PromptGroup<f64>> = Vec::new();
        let mut staleness = BTreeMap::new();
        let mut ticks = 0;
        let mut resample_rounds = 0;
        let retained = loop {
            let fired = engine.next_batch(&mut runner)?;
            ticks += fired.iteration_time;
            for &s in &fired.staleness {
                *staleness.entry(s).or_insert(0) += 1;
            }
            let mut trajs: Vec<Trajectory<f64>> = fired.members().map(|t| runner.take(t)).collect::<Result<_>>()?;
            for t in &mut trajs {
                t.reward = verifier_reward(t);
            }
            let mut groups = group_by_prompt(trajs)?;
            if preference_step {
                preference_rewards(&mut groups, cfg.seed);
            }
            seen.extend(groups.iter().cloned());
            let kept = dynamic_filter(groups);
            if !kept.is_empty() {
                break kept;
            }
            if resample_rounds == cfg.resample_rounds {
                write_record(metrics, &AbortRecord { step, abort: "starvation" })?;
                return Err(Error::Starvation { rounds: resample_rounds + 1 });
            }
            resample_rounds += 1;
            runner.queue(wave_prompts(&stats, cfg, wave)?);
            wave += 1;
            engine.bump(&mut runner, version)?;
        };

        let retained_count = retained.len();
        let mut batch: Vec<Trajectory<f64>> = retained.into_iter().flat_map(|g| g.trajectories).collect();
        let report = match update_step(&mut params, &mut batch, cfg, step) {
            Ok(r) => r,
            Err(e @ Error::NumericalAbort { .. }) => {
                write_record(metrics, &AbortRecord { step, abort: &e.to_string() })?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        version = store.publish(params.clone(), engine.now());
        let cells = cell_metrics(&stats, &seen);
        stats = update_distribution(&stats, &seen);

        let last = step + 1 == cfg.total_steps;
        let eval_now = last || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0);
        let eval_pass_at_1 = if eval_now { Some(held_out_pass_at_1(&params, cfg)?) } else { None };
        if last {
            final_pass = eval_pass_at_1;
        }
        let all: Vec<&Trajectory<f64>> = seen.iter().flat_map(|g| &g.trajectories).collect();
        let successes = all.iter().filter(|t| sampler::is_success(t.reward)).count();
        let rec = RunMetrics {
            step,
            version,
            ppo_loss: report.loss.ppo_loss,
            value_loss: report.loss.value_loss,
            nll_loss: report.loss.nll_loss,
            total_loss: report.loss.total,
            tokens: report.loss.token_count,
            mean_response_len: batch.iter().map(Trajectory::len).sum::<usize>() as f64 / batch.len() as f64,
            max_response_len: batch.iter().map(Trajectory::len).max().unwrap_or(0),
            batch_pass_rate: successes as f64 / all.len().max(1) as f64,
            cells,
            groups_seen: seen.len(),
            groups_retained: retained_count,
            groups_filtered: seen.len() - retained_count,
            resample_rounds,
            retained_fraction: retained_count as f64 / seen.len().max(1) as f64,
            micro_batches: report.plan.m,
            micro_batch_loads: report.plan.loads.clone(),
            balance: report.balance,
            staleness,
            rollout_ticks: ticks,
            preference_step,
            grad_norm: report.grad_norm,
            eval_pass_at_1,
        };
        write_record(metrics, &rec)?;
        if let Some(t) = timing.as_deref_mut() {
            write_record(t, &TimingRecord { step, wall_ms: started.elapsed().as_secs_f64() * 1e3 })?;
        }
        if !last {
            runner.queue(wave_prompts(&stats, cfg, wave)?);
            wave += 1;
            engine.bump(&mut runner, version)?;
        }
    }
    Ok(TrainOutcome { params, steps: cfg.total_steps, pretrain, final_pass_at_1: final_pass, config_hash })
}

/// Paths written by [`train`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub timing: PathBuf,
    pub checkpoint: PathBuf,
    pub summary: PathBuf,
}

/// Trains and writes metrics, timings, the final checkpoint and a summary
/// into `out_dir`.
pub fn train(cfg: &RLConfig, out_dir: &Path) -> Result<(TrainOutcome, RunFiles)> {
    std::fs::create_dir_all(out_dir)?;
    let files = RunFiles {
        metrics: out_dir.join(METRICS_FILE),
        timing: out_dir.join(TIMING_FILE),
        checkpoint: out_dir.join(CHECKPOINT_FILE),
        summary: out_dir.join(SUMMARY_FILE),
    };
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&files.metrics)?);
    let mut timing = std::io::BufWriter::new(std::fs::File::create(&files.timing)?);
    let outcome = run_training(cfg, &mut metrics, Some(&mut timing))?;
    let meta = CheckpointMeta { step: outcome.steps as u64, config_hash: outcome.config_hash };
    checkpoint::save(&files.checkpoint, &outcome.params, meta)?;
    std::fs::write(&files.summary, serde_json::to_string_pretty(&outcome)? + "\n")?;
    Ok((outcome, files))
}
