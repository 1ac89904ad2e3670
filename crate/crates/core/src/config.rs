//! Training configuration, loaded from TOML. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advantage::GaeParams;
use crate::envs::{TaskId, MAX_DIFFICULTY, MIN_DIFFICULTY};
use crate::error::{Error, Result};
use crate::objective::{ClipParams, LossConfig};
use crate::policy::PolicyShape;
use crate::rollout::{LengthDist, SrsConfig};
use crate::sampler::Cell;
use crate::vocab::VOCAB_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub task: TaskId,
    pub difficulty: u8,
}

impl From<CellSpec> for Cell {
    fn from(c: CellSpec) -> Self {
        Cell { task: c.task, difficulty: c.difficulty }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub hidden: usize,
    pub window: usize,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { hidden: 32, window: 8, init_scale: 0.1 }
    }
}

/// Scheduler settings. Batch size is `prompts_per_step * group_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSection {
    pub alpha_onpolicy: f64,
    /// 0 means one main unit per sequence in the batch.
    pub n_main_units: usize,
    pub n_standalone_units: usize,
    pub tokens_per_unit_per_tick: f64,
    pub fp8_speedup: f64,
    /// 0 means four batches.
    pub pool_capacity: usize,
}

impl Default for RolloutSection {
    fn default() -> Self {
        Self {
            alpha_onpolicy: 1.0,
            n_main_units: 0,
            n_standalone_units: 0,
            tokens_per_unit_per_tick: 1.0,
            fp8_speedup: 2.0,
            pool_capacity: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RLConfig {
    pub seed: u64,
    pub total_steps: usize,
    pub value_pretrain_steps: usize,
    pub prompts_per_step: usize,
    pub group_size: usize,
    pub max_response_len: usize,
    pub micro_batches: usize,
    pub learning_rate: f64,
    pub value_pretrain_learning_rate: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
    pub gamma: f64,
    pub lambda_value: f64,
    pub alpha_gae: f64,
    /// Fixed policy λ; when absent the length-adaptive λ is used.
    pub lambda_policy: Option<f64>,
    pub eps_low: f64,
    pub eps_high: f64,
    pub mu: f64,
    pub value_coeff: f64,
    pub resample_rounds: usize,
    pub ema_beta: f64,
    pub weight_floor: f64,
    /// Fraction of steps rewarded by the pairwise preference oracle.
    pub preference_fraction: f64,
    /// Held-out evaluation cadence in steps; 0 evaluates only at the end.
    pub eval_every: usize,
    pub eval_instances: usize,
    pub cells: Vec<CellSpec>,
    pub policy: PolicySection,
    pub rollout: RolloutSection,
}

impl Default for RLConfig {
    fn default() -> Self {
        Self {
            seed: 17,
            total_steps: 300,
            value_pretrain_steps: 50,
            prompts_per_step: 16,
            group_size: 8,
            max_response_len: 8,
            micro_batches: 4,
            learning_rate: 1.25,
            value_pretrain_learning_rate: 0.05,
            max_grad_norm: 0.5,
            gamma: 1.0,
            lambda_value: 1.0,
            alpha_gae: 0.05,
            lambda_policy: None,
            eps_low: 0.2,
            eps_high: 0.3,
            mu: 0.1,
            value_coeff: 0.5,
            resample_rounds: 5,
            ema_beta: 0.9,
            weight_floor: 0.01,
            preference_fraction: 0.0,
            eval_every: 25,
            eval_instances: 64,
            cells: vec![CellSpec { task: TaskId::Maze, difficulty: 1 }],
            policy: PolicySection::default(),
            rollout: RolloutSection::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl RLConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check(self.prompts_per_step >= 1, || "prompts_per_step must be >= 1".into())?;
        check(self.group_size >= 1, || "group_size must be >= 1".into())?;
        check(self.max_response_len >= 1, || "max_response_len must be >= 1".into())?;
        check(self.micro_batches >= 1, || "micro_batches must be >= 1".into())?;
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("value_pretrain_learning_rate", self.value_pretrain_learning_rate),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            check(v.is_finite() && v >= 0.0, || format!("{name} must be finite and >= 0, got {v}"))?;
        }
        check(self.resample_rounds >= 1, || "resample_rounds must be >= 1".into())?;
        check((0.0..1.0).contains(&self.ema_beta), || format!("ema_beta must be in [0, 1), got {}", self.ema_beta))?;
        check(self.weight_floor > 0.0 && self.weight_floor.is_finite(), || {
            format!("weight_floor must be > 0, got {}", self.weight_floor)
        })?;
        check((0.0..=1.0).contains(&self.preference_fraction), || {
            format!("preference_fraction must be in [0, 1], got {}", self.preference_fraction)
        })?;
        check(self.eval_instances >= 1, || "eval_instances must be >= 1".into())?;
        check(!self.cells.is_empty(), || "at least one cell is required".into())?;
        for c in &self.cells {
            check((MIN_DIFFICULTY..=MAX_DIFFICULTY).contains(&c.difficulty), || {
                format!("difficulty {} of {} outside {MIN_DIFFICULTY}..={MAX_DIFFICULTY}", c.difficulty, c.task)
            })?;
        }
        let mut cells: Vec<Cell> = self.cells.iter().map(|&c| c.into()).collect();
        cells.sort();
        cells.dedup();
        check(cells.len() == self.cells.len(), || "duplicate cell".into())?;
        check(self.policy.init_scale.is_finite() && self.policy.init_scale >= 0.0, || {
            "policy.init_scale must be finite and >= 0".into()
        })?;
        self.shape()?;
        self.gae().map_err(as_config)?;
        self.loss().map_err(as_config)?;
        self.srs()?.validate()
    }

    pub fn batch_size(&self) -> usize {
        self.prompts_per_step * self.group_size
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.cells.iter().map(|&c| c.into()).collect()
    }

    pub fn shape(&self) -> Result<PolicyShape> {
        PolicyShape::new(VOCAB_SIZE, self.policy.hidden, self.policy.window, crate::envs::PROMPT_DIM).map_err(as_config)
    }

    pub fn gae(&self) -> Result<GaeParams<f64>> {
        GaeParams::new(self.gamma, self.lambda_value, self.alpha_gae, self.lambda_policy)
    }

    pub fn loss(&self) -> Result<LossConfig<f64>> {
        LossConfig::new(ClipParams::new(self.eps_low, self.eps_high)?, self.mu, self.value_coeff)
    }

    pub fn srs(&self) -> Result<SrsConfig> {
        let b = self.batch_size();
        let r = &self.rollout;
        Ok(SrsConfig {
            alpha_onpolicy: r.alpha_onpolicy,
            n_main_units: if r.n_main_units == 0 { b } else { r.n_main_units },
            n_standalone_units: r.n_standalone_units,
            tokens_per_unit_per_tick: r.tokens_per_unit_per_tick,
            fp8_speedup: r.fp8_speedup,
            batch_size: b,
            lengths: LengthDist::Cycle { lengths: vec![self.max_response_len as u64] },
            pool_capacity: if r.pool_capacity == 0 { 4 * b } else { r.pool_capacity },
        })
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RLConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string();
        assert_eq!(RLConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = RLConfig::from_toml_str("seed = 3\n[rollout]\nalpha_onpolicy = 0.5\nn_standalone_units = 1\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.group_size, 8);
        assert_eq!(cfg.srs().unwrap().fresh_target(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["seeed = 3", "[policy]\nwidth = 4", "[[cells]]\ntask = \"maze\"\ndifficulty = 1\nextra = 2"] {
            let e = RLConfig::from_toml_str(text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn ranges_rejected() {
        for text in [
            "eps_low = 1.5",
            "gamma = 2.0",
            "group_size = 0",
            "learning_rate = -1.0",
            "[rollout]\nalpha_onpolicy = 0.5",
            "[[cells]]\ntask = \"maze\"\ndifficulty = 9",
            "[[cells]]\ntask = \"chess\"\ndifficulty = 1",
            "cells = []",
            "[policy]\nhidden = 500",
        ] {
            let e = RLConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{text}: {e}");
        }
    }
}
