//! Central finite-difference check of the combined-loss gradient.
//!
//! The loss is a function of the parameters through the current log-probs
//! and value predictions; advantages, value targets and behavior log-probs
//! are held fixed.

use rand::seq::index;

use super::PolicyParams;
use crate::error::Result;
use crate::objective::{combined_loss_with_grads, LossConfig};
use crate::rng;
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

/// Minimum number of coordinates compared by [`finite_diff_check`].
pub const MIN_COORDINATES: usize = 200;

/// Gradients smaller than this on both sides count as zero when forming the
/// relative error.
pub const ABS_FLOOR: f64 = 1e-8;

/// Loss value at `params`.
pub fn loss_at<T: Scalar>(params: &PolicyParams<T>, batch: &[Trajectory<T>], cfg: &LossConfig<T>) -> Result<T> {
    let mut batch = batch.to_vec();
    for t in &mut batch {
        params.refresh(t)?;
    }
    Ok(combined_loss_with_grads(&batch, cfg, None)?.0.total)
}

/// Loss and its analytic gradient.
pub fn analytic_gradient<T: Scalar>(
    params: &PolicyParams<T>,
    batch: &[Trajectory<T>],
    cfg: &LossConfig<T>,
) -> Result<(T, PolicyParams<T>)> {
    let mut batch = batch.to_vec();
    for t in &mut batch {
        params.refresh(t)?;
    }
    let (loss, token_grads) = combined_loss_with_grads(&batch, cfg, None)?;
    let mut grad = PolicyParams::zeros(*params.shape())?;
    for (t, g) in batch.iter().zip(&token_grads) {
        params.backward(t, &g.logp, &g.value, &mut grad)?;
    }
    Ok((loss.total, grad))
}

pub fn relative_error<T: Scalar>(a: T, b: T) -> T {
    let scale = a.abs().max(b.abs());
    if scale < T::of(ABS_FLOOR) {
        if a == b {
            T::zero()
        } else {
            (a - b).abs() / T::of(ABS_FLOOR)
        }
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative error between `analytic` and central differences over `coords`.
pub fn max_relative_error<T: Scalar>(
    params: &PolicyParams<T>,
    batch: &[Trajectory<T>],
    cfg: &LossConfig<T>,
    analytic: &PolicyParams<T>,
    coords: &[usize],
    step: T,
) -> Result<T> {
    let mut probe = params.clone();
    let mut worst = T::zero();
    for &i in coords {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + step;
        let up = loss_at(&probe, batch, cfg)?;
        probe.as_mut_slice()[i] = orig - step;
        let down = loss_at(&probe, batch, cfg)?;
        probe.as_mut_slice()[i] = orig;
        let numeric = (up - down) / (step + step);
        worst = worst.max(relative_error(analytic.as_slice()[i], numeric));
    }
    Ok(worst)
}

/// Coordinates to probe: half drawn from those with a nonzero analytic
/// gradient, the rest uniformly from all parameters.
pub fn pick_coordinates<T: Scalar>(analytic: &PolicyParams<T>, count: usize, seed: u64) -> Vec<usize> {
    let n = analytic.len();
    if count >= n {
        return (0..n).collect();
    }
    let mut rng = rng::keyed(&[0x6C4E, seed]);
    let active: Vec<usize> = (0..n).filter(|&i| analytic.as_slice()[i] != T::zero()).collect();
    let take_active = (count / 2).min(active.len());
    let mut coords: Vec<usize> = index::sample(&mut rng, active.len(), take_active)
        .into_iter()
        .map(|k| active[k])
        .collect();
    for i in index::sample(&mut rng, n, n.min(count)) {
        if coords.len() >= count {
            break;
        }
        if !coords.contains(&i) {
            coords.push(i);
        }
    }
    coords.sort_unstable();
    coords
}

/// Max relative error of the analytic combined-loss gradient against central
/// differences with the given step, over at least [`MIN_COORDINATES`]
/// coordinates (or all of them, if fewer).
pub fn finite_diff_check<T: Scalar>(
    params: &PolicyParams<T>,
    batch: &[Trajectory<T>],
    cfg: &LossConfig<T>,
    step: T,
    seed: u64,
) -> Result<T> {
    let (_, analytic) = analytic_gradient(params, batch, cfg)?;
    let coords = pick_coordinates(&analytic, MIN_COORDINATES, seed);
    max_relative_error(params, batch, cfg, &analytic, &coords, step)
}

/// A random batch for gradient checks: responses sampled from `behavior`
/// on random prompts, with random rewards, advantages and value targets.
pub fn synthetic_batch<T: Scalar>(
    behavior: &PolicyParams<T>,
    n_traj: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Trajectory<T>>> {
    use rand::Rng;
    use std::sync::Arc;

    use crate::trajectory::Prompt;

    let shape = *behavior.shape();
    let mut rng = rng::keyed(&[0xBA7C, seed]);
    let mask = if shape.alphabet == 64 { u64::MAX } else { (1u64 << shape.alphabet) - 1 };
    let mut out = Vec::with_capacity(n_traj);
    for k in 0..n_traj {
        let features = (0..3.min(shape.prompt_dim))
            .map(|_| (rng.gen_range(0..shape.prompt_dim) as u32, rng.gen_range(-1.0..1.0)))
            .collect();
        let prompt = Arc::new(Prompt::synthetic(k as u64, mask, features));
        let mut t = behavior.rollout(0, &prompt, max_len, rng::mix(&[seed, k as u64]))?;
        let n = t.len();
        t.reward = if rng.gen_bool(0.5) { T::one() } else { T::zero() };
        t.advantages = (0..n).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect();
        t.value_targets = (0..n).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect();
        out.push(t);
    }
    Ok(out)
}
