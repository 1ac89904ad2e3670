//! Desk-scale reinforcement learning for sequence policies on verifiable puzzles.
//!
//! The numeric core (advantage estimation, losses, the tiny policy and the
//! pass@k estimator) is generic over [`Scalar`], so the same code runs in
//! `f32` or `f64`. Training and the CLI use the `f64` aliases defined here.

// NaN must fail range checks, hence `!(x > 0)` rather than `x <= 0`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod advantage;
pub mod batching;
pub mod checkpoint;
pub mod config;
pub mod envs;
pub mod error;
pub mod objective;
pub mod policy;
pub mod rng;
pub mod rollout;
pub mod sampler;
pub mod scalar;
pub mod trainer;
pub mod trajectory;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Real type used for training runs, checkpoints and metrics.
pub type Real = f64;

pub type GaeParams64 = advantage::GaeParams<f64>;
pub type AdvantageResult64 = advantage::AdvantageResult<f64>;
pub type ClipParams64 = objective::ClipParams<f64>;
pub type LossBreakdown64 = objective::LossBreakdown<f64>;
pub type PolicyParams64 = policy::PolicyParams<f64>;
pub type PolicyParams32 = policy::PolicyParams<f32>;
pub type Trajectory64 = trajectory::Trajectory<f64>;
pub type Trajectory32 = trajectory::Trajectory<f32>;
pub type PromptGroup64 = sampler::PromptGroup<f64>;
pub type SnapshotStore64 = rollout::SnapshotStore<f64>;
