//! Group accounting, the dynamic-sampling filter, online difficulty
//! adaptation and pass@k / avg@k.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::envs::{self, PuzzleInstance, TaskId};
use crate::error::{Error, Result};
use crate::objective::POSITIVE_REWARD_THRESHOLD;
use crate::rng;
use crate::scalar::Scalar;
use crate::trajectory::{Prompt, Trajectory};

/// The `k` responses sampled for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptGroup<T = f64> {
    pub prompt: Arc<Prompt>,
    pub trajectories: Vec<Trajectory<T>>,
    pub accuracy: f64,
}

impl<T: Scalar> PromptGroup<T> {
    pub fn new(prompt: Arc<Prompt>, trajectories: Vec<Trajectory<T>>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::invalid("a prompt group needs at least one trajectory"));
        }
        let accuracy = accuracy_of(&trajectories);
        Ok(Self { prompt, trajectories, accuracy })
    }

    pub fn successes(&self) -> usize {
        self.trajectories.iter().filter(|t| is_success(t.reward)).count()
    }

    /// Recomputes `accuracy` after rewards change.
    pub fn refresh_accuracy(&mut self) {
        self.accuracy = accuracy_of(&self.trajectories);
    }

    pub fn cell(&self) -> Option<Cell> {
        self.prompt.instance.as_ref().map(|i| Cell { task: i.task, difficulty: i.difficulty })
    }
}

pub fn is_success<T: Scalar>(reward: T) -> bool {
    reward.as_f64() > POSITIVE_REWARD_THRESHOLD
}

pub fn accuracy_of<T: Scalar>(trajectories: &[Trajectory<T>]) -> f64 {
    if trajectories.is_empty() {
        return 0.0;
    }
    let c = trajectories.iter().filter(|t| is_success(t.reward)).count();
    c as f64 / trajectories.len() as f64
}

/// Keeps groups with mixed outcomes, in order.
pub fn dynamic_filter<T: Clone>(groups: Vec<PromptGroup<T>>) -> Vec<PromptGroup<T>> {
    groups
        .into_iter()
        .filter(|g| g.accuracy > 0.0 && g.accuracy < 1.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub task: TaskId,
    pub difficulty: u8,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.task, self.difficulty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub cell: Cell,
    pub ema: f64,
    pub count: u64,
    pub weight: f64,
}

/// Per-cell pass-rate averages and the sampling distribution derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub cells: Vec<CellStats>,
    pub beta: f64,
    pub floor: f64,
}

impl DomainStats {
    /// Every cell starts at pass rate 0.5, which gives uniform weights.
    pub fn new(cells: &[Cell], beta: f64, floor: f64) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::invalid("at least one task/difficulty cell is required"));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid(format!("ema decay must be in [0, 1), got {beta}")));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::invalid(format!("weight floor must be positive, got {floor}")));
        }
        let mut seen = cells.to_vec();
        seen.sort();
        seen.dedup();
        if seen.len() != cells.len() {
            return Err(Error::invalid("duplicate task/difficulty cell"));
        }
        let mut stats = Self {
            cells: cells
                .iter()
                .map(|&cell| CellStats { cell, ema: 0.5, count: 0, weight: 0.0 })
                .collect(),
            beta,
            floor,
        };
        stats.reweight();
        Ok(stats)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.weight).collect()
    }

    fn reweight(&mut self) {
        let raw: Vec<f64> = self.cells.iter().map(|c| c.ema * (1.0 - c.ema) + self.floor).collect();
        let total: f64 = raw.iter().sum();
        for (c, r) in self.cells.iter_mut().zip(raw) {
            c.weight = r / total;
        }
    }

    /// Sets the pass-rate averages directly and recomputes weights.
    pub fn with_emas(mut self, emas: &[f64]) -> Result<Self> {
        if emas.len() != self.cells.len() {
            return Err(Error::invalid("one ema per cell expected"));
        }
        for (c, &e) in self.cells.iter_mut().zip(emas) {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::invalid(format!("pass rate {e} outside [0, 1]")));
            }
            c.ema = e;
        }
        self.reweight();
        Ok(self)
    }
}

/// Folds the observed pass rates of `groups` into the per-cell averages.
/// Cells without observations keep their average. Groups from unknown cells
/// are ignored.
pub fn update_distribution<T: Scalar>(stats: &DomainStats, groups: &[PromptGroup<T>]) -> DomainStats {
    let mut next = stats.clone();
    let mut hits = vec![0u64; next.cells.len()];
    let mut totals = vec![0u64; next.cells.len()];
    for g in groups {
        let Some(cell) = g.cell() else { continue };
        if let Some(idx) = next.cells.iter().position(|c| c.cell == cell) {
            hits[idx] += g.successes() as u64;
            totals[idx] += g.trajectories.len() as u64;
        }
    }
    for (i, c) in next.cells.iter_mut().enumerate() {
        if totals[i] > 0 {
            let rate = hits[i] as f64 / totals[i] as f64;
            c.ema = next.beta * c.ema + (1.0 - next.beta) * rate;
            c.count += totals[i];
        }
    }
    next.reweight();
    next
}

/// Draws `n` cells from the weights and generates a fresh instance for each.
pub fn sample_prompts(stats: &DomainStats, n: usize, seed: u64) -> Result<Vec<PuzzleInstance>> {
    sample_cells(stats, n, seed)?
        .into_iter()
        .enumerate()
        .map(|(i, cell)| envs::generate(cell.task, cell.difficulty, rng::mix(&[seed, 0x1A57, i as u64])))
        .collect()
}

/// The cell draws behind [`sample_prompts`].
pub fn sample_cells(stats: &DomainStats, n: usize, seed: u64) -> Result<Vec<Cell>> {
    if n == 0 {
        return Err(Error::invalid("must sample at least one prompt"));
    }
    let dist = WeightedIndex::new(stats.weights())
        .map_err(|e| Error::invalid(format!("bad sampling weights: {e}")))?;
    let mut r = rng::keyed(&[seed, 0xCE11]);
    Ok((0..n).map(|_| stats.cells[dist.sample(&mut r)].cell).collect())
}

/// Unbiased pass@k: `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k<T: Scalar>(outcomes: &[bool], k: usize) -> Result<T> {
    let n = outcomes.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("pass@k needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let c = outcomes.iter().filter(|&&o| o).count();
    if n - c < k {
        return Ok(T::one());
    }
    let mut miss = T::one();
    for i in 0..k {
        miss *= T::of((n - c - i) as f64) / T::of((n - i) as f64);
    }
    Ok(T::one() - miss)
}

/// Literal best-of-k: whether any of the first `k` attempts succeeded.
pub fn best_of_k(outcomes: &[bool], k: usize) -> Result<bool> {
    if k == 0 || k > outcomes.len() {
        return Err(Error::invalid(format!("best-of-k needs 1 <= k <= n, got k = {k}, n = {}", outcomes.len())));
    }
    Ok(outcomes[..k].iter().any(|&o| o))
}

pub fn avg_at_k<T: Scalar>(outcomes: &[bool]) -> Result<T> {
    if outcomes.is_empty() {
        return Err(Error::invalid("avg@k needs at least one outcome"));
    }
    let c = outcomes.iter().filter(|&&o| o).count();
    Ok(T::of(c as f64) / T::of(outcomes.len() as f64))
}

/// Mean of `1[any success]` over all k-subsets, by enumeration. `n <= 20`.
pub fn pass_at_k_enumerated(outcomes: &[bool], k: usize) -> f64 {
    let n = outcomes.len();
    assert!(n <= 20 && k >= 1 && k <= n);
    let hits: u32 = outcomes
        .iter()
        .enumerate()
        .filter(|(_, &o)| o)
        .fold(0, |acc, (i, _)| acc | (1 << i));
    let (mut subsets, mut good) = (0u64, 0u64);
    for s in 0u32..(1 << n) {
        if s.count_ones() as usize == k {
            subsets += 1;
            if s & hits != 0 {
                good += 1;
            }
        }
    }
    good as f64 / subsets as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn group(acc_hits: usize, k: usize, id: u64) -> PromptGroup<f64> {
        let prompt = Arc::new(Prompt::synthetic(id, 1, vec![]));
        let trajs = (0..k)
            .map(|a| {
                let mut t = Trajectory::empty(prompt.clone(), a as u32);
                t.reward = if a < acc_hits { 1.0 } else { 0.0 };
                t
            })
            .collect();
        PromptGroup::new(prompt, trajs).unwrap()
    }

    fn cell(task: TaskId, d: u8) -> Cell {
        Cell { task, difficulty: d }
    }

    #[test]
    fn filter_examples() {
        let kept = dynamic_filter(vec![group(4, 4, 0), group(2, 4, 1), group(0, 4, 2)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].accuracy, 0.5);
        assert_eq!(dynamic_filter(vec![group(1, 4, 0), group(1, 4, 1)]).len(), 2);
        assert!(dynamic_filter(vec![group(0, 4, 0), group(4, 4, 1)]).is_empty());
    }

    #[test]
    fn accuracy_uses_threshold() {
        let mut g = group(0, 3, 0);
        g.trajectories[0].reward = 0.5;
        g.trajectories[1].reward = 0.51;
        g.refresh_accuracy();
        assert!((g.accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weights_examples() {
        let cells = [cell(TaskId::Maze, 1), cell(TaskId::Maze, 2)];
        let s = DomainStats::new(&cells, 0.9, 0.01).unwrap();
        assert_eq!(s.weights(), vec![0.5, 0.5]);
        let s = s.with_emas(&[1.0, 0.5]).unwrap();
        let w = s.weights();
        assert!((w[0] - 0.01 / 0.27).abs() < 1e-15);
        assert!((w[1] - 0.26 / 0.27).abs() < 1e-15);
        assert!(w[0] >= 0.01 / (0.25 + 2.0 * 0.01) - 1e-15);
    }

    #[test]
    fn update_moves_ema() {
        let cells = [cell(TaskId::Maze, 1)];
        let s = DomainStats::new(&cells, 0.9, 0.01).unwrap();
        let inst = envs::generate(TaskId::Maze, 1, 3).unwrap();
        let prompt = Arc::new(Prompt::from_instance(0, inst));
        let mut trajs = Vec::new();
        for a in 0..4 {
            let mut t = Trajectory::<f64>::empty(prompt.clone(), a);
            t.reward = 1.0;
            trajs.push(t);
        }
        let g = PromptGroup::new(prompt, trajs).unwrap();
        let s2 = update_distribution(&s, &[g]);
        assert!((s2.cells[0].ema - 0.55).abs() < 1e-15);
        assert_eq!(s2.cells[0].count, 4);
        assert_eq!(s2.weights(), vec![1.0]);
    }

    #[test]
    fn sampling() {
        let one = DomainStats::new(&[cell(TaskId::Sudoku4, 2)], 0.9, 0.01).unwrap();
        let p = sample_prompts(&one, 5, 1).unwrap();
        assert!(p.iter().all(|i| i.task == TaskId::Sudoku4 && i.difficulty == 2));
        assert_eq!(p, sample_prompts(&one, 5, 1).unwrap());

        let mut two = DomainStats::new(&[cell(TaskId::Maze, 1), cell(TaskId::Maze, 2)], 0.9, 0.01).unwrap();
        two.cells[0].weight = 0.9;
        two.cells[1].weight = 0.1;
        let draws = sample_cells(&two, 10_000, 42).unwrap();
        let freq = draws.iter().filter(|c| c.difficulty == 1).count() as f64 / 10_000.0;
        assert!((freq - 0.9).abs() <= 0.02, "{freq}");
        assert!(sample_prompts(&two, 0, 1).is_err());
    }

    #[test]
    fn pass_examples() {
        let none = [false; 8];
        let mut one = [false; 8];
        one[5] = true;
        assert_eq!(pass_at_k::<f64>(&none, 8).unwrap(), 0.0);
        assert_eq!(pass_at_k::<f64>(&one, 8).unwrap(), 1.0);
        let v = pass_at_k::<f64>(&[true, false, true, false], 2).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
        assert!(pass_at_k::<f64>(&none, 9).is_err());
        assert_eq!(avg_at_k::<f64>(&[true; 4]).unwrap(), 1.0);
        assert_eq!(avg_at_k::<f64>(&[false; 4]).unwrap(), 0.0);
        let three = [true, true, true, false, false, false, false, false];
        assert_eq!(avg_at_k::<f64>(&three).unwrap(), 0.375);
        assert!(best_of_k(&three, 3).unwrap());
        assert!(!best_of_k(&[false, true], 1).unwrap());
        assert_eq!(pass_at_k::<f32>(&[true], 1).unwrap(), avg_at_k::<f32>(&[true]).unwrap());
    }

    #[test]
    fn pass_matches_enumeration_small() {
        for n in 1..=8usize {
            for c in 0..=n {
                let o: Vec<bool> = (0..n).map(|i| i < c).collect();
                for k in 1..=n {
                    let a = pass_at_k::<f64>(&o, k).unwrap();
                    assert!((a - pass_at_k_enumerated(&o, k)).abs() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn filter_idempotent(hits in proptest::collection::vec(0usize..=4, 0..20)) {
            let groups: Vec<_> = hits.iter().enumerate().map(|(i, &h)| group(h, 4, i as u64)).collect();
            let once = dynamic_filter(groups);
            let twice = dynamic_filter(once.clone());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn weights_normalized(emas in proptest::collection::vec(0.0f64..=1.0, 1..=5), floor in 1e-4f64..0.5) {
            let cells: Vec<Cell> = (0..emas.len()).map(|d| cell(TaskId::Maze, d as u8 + 1)).collect();
            let s = DomainStats::new(&cells, 0.9, floor).unwrap().with_emas(&emas).unwrap();
            let w = s.weights();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn pass_monotone_in_k(o in proptest::collection::vec(any::<bool>(), 1..16)) {
            let mut prev = 0.0;
            for k in 1..=o.len() {
                let v = pass_at_k::<f64>(&o, k).unwrap();
                prop_assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }
}
