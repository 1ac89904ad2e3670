//! Training losses.
//!
//! The policy term is the PPO surrogate with separate lower and upper clip
//! bounds, averaged over every token of the batch (not per response). A
//! language-model loss on verifier-correct responses is added with weight
//! `mu`, and the value head regresses onto its targets with weight
//! `value_coeff`:
//!
//! ```text
//! total = ppo + mu * nll + value_coeff * value_mse
//! ```
//!
//! All functions also return the derivative of the loss with respect to each
//! token's current log-probability and value prediction, which the policy
//! module chains into parameter gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

/// Reward above which a response counts as a positive example.
pub const POSITIVE_REWARD_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipParams<T = f64> {
    pub eps_low: T,
    pub eps_high: T,
}

impl<T: Scalar> ClipParams<T> {
    pub fn new(eps_low: T, eps_high: T) -> Result<Self> {
        if !(eps_low > T::zero() && eps_low < T::one()) {
            return Err(Error::invalid(format!("eps_low must lie in (0, 1), got {eps_low}")));
        }
        if !(eps_high > T::zero()) || !eps_high.is_finite() {
            return Err(Error::invalid(format!("eps_high must be > 0, got {eps_high}")));
        }
        Ok(Self { eps_low, eps_high })
    }

    pub fn symmetric(eps: T) -> Result<Self> {
        Self::new(eps, eps)
    }

    fn clamp(&self, ratio: T) -> T {
        ratio.max(T::one() - self.eps_low).min(T::one() + self.eps_high)
    }
}

impl Default for ClipParams<f64> {
    fn default() -> Self {
        Self { eps_low: 0.2, eps_high: 0.3 }
    }
}

/// `min(r·A, clip(r, 1−ε_low, 1+ε_high)·A)`: the per-token surrogate to maximize.
pub fn clip_higher_term<T: Scalar>(ratio: T, advantage: T, clip: &ClipParams<T>) -> Result<T> {
    if !ratio.is_finite() || !advantage.is_finite() {
        return Err(Error::invalid(format!("non-finite ratio {ratio} or advantage {advantage}")));
    }
    if !(ratio > T::zero()) {
        return Err(Error::invalid(format!("ratio must be > 0, got {ratio}")));
    }
    Ok((ratio * advantage).min(clip.clamp(ratio) * advantage))
}

/// Surrogate value and its derivative with respect to the log-ratio.
/// The unclipped branch wins ties, so the derivative inside the band is `r·A`.
fn surrogate_and_slope<T: Scalar>(ratio: T, advantage: T, clip: &ClipParams<T>) -> Result<(T, T)> {
    let value = clip_higher_term(ratio, advantage, clip)?;
    let unclipped = ratio * advantage;
    let slope = if unclipped <= clip.clamp(ratio) * advantage { unclipped } else { T::zero() };
    Ok((value, slope))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T = f64> {
    pub ppo_loss: T,
    pub value_loss: T,
    pub nll_loss: T,
    pub total: T,
    pub token_count: usize,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn zero() -> Self {
        Self { ppo_loss: T::zero(), value_loss: T::zero(), nll_loss: T::zero(), total: T::zero(), token_count: 0 }
    }

    /// Sums parts computed with shared batch normalizers.
    pub fn accumulate(&mut self, other: &Self) {
        self.ppo_loss += other.ppo_loss;
        self.value_loss += other.value_loss;
        self.nll_loss += other.nll_loss;
        self.total += other.total;
        self.token_count += other.token_count;
    }
}

/// Loss coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig<T = f64> {
    pub clip: ClipParams<T>,
    pub mu: T,
    pub value_coeff: T,
    pub positive_threshold: T,
}

impl<T: Scalar> LossConfig<T> {
    pub fn new(clip: ClipParams<T>, mu: T, value_coeff: T) -> Result<Self> {
        if !(mu >= T::zero()) || !(value_coeff >= T::zero()) {
            return Err(Error::invalid("mu and value_coeff must be >= 0"));
        }
        Ok(Self { clip, mu, value_coeff, positive_threshold: T::of(POSITIVE_REWARD_THRESHOLD) })
    }
}

impl Default for LossConfig<f64> {
    fn default() -> Self {
        Self { clip: ClipParams::default(), mu: 0.1, value_coeff: 0.5, positive_threshold: POSITIVE_REWARD_THRESHOLD }
    }
}

/// Token counts the per-batch means divide by. When a batch is split into
/// micro-batches, pass the full batch's normalizers to every part so the
/// parts sum to the full-batch loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalizers {
    pub total_tokens: usize,
    pub positive_tokens: usize,
}

impl Normalizers {
    pub fn of<T: Scalar>(trajs: &[Trajectory<T>], positive_threshold: T) -> Self {
        let total_tokens = trajs.iter().map(Trajectory::len).sum();
        let positive_tokens = trajs
            .iter()
            .filter(|t| t.reward > positive_threshold)
            .map(Trajectory::len)
            .sum();
        Self { total_tokens, positive_tokens }
    }
}

/// Per-token loss derivatives for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrads<T = f64> {
    /// dL / d(current log-prob of token t).
    pub logp: Vec<T>,
    /// dL / d(value prediction at token t).
    pub value: Vec<T>,
}

fn check_populated<T: Scalar>(t: &Trajectory<T>, need_values: bool) -> Result<()> {
    let n = t.len();
    if t.behavior_logprobs.len() != n || t.current_logprobs.len() != n || t.advantages.len() != n {
        return Err(Error::invalid("trajectory missing log-probs or advantages"));
    }
    if need_values && (t.values.len() != n || t.value_targets.len() != n) {
        return Err(Error::invalid("trajectory missing values or value targets"));
    }
    Ok(())
}

fn ppo_part<T: Scalar>(trajs: &[Trajectory<T>], clip: &ClipParams<T>, total_tokens: usize) -> Result<(T, Vec<Vec<T>>)> {
    if total_tokens == 0 {
        return Err(Error::invalid("batch has no tokens"));
    }
    let norm = T::from_usize(total_tokens).expect("count fits");
    let mut sum = T::zero();
    let mut grads = Vec::with_capacity(trajs.len());
    for t in trajs {
        check_populated(t, false)?;
        let mut g = Vec::with_capacity(t.len());
        for i in 0..t.len() {
            let ratio = (t.current_logprobs[i] - t.behavior_logprobs[i]).exp();
            let (s, slope) = surrogate_and_slope(ratio, t.advantages[i], clip)?;
            sum += s;
            g.push(-slope / norm);
        }
        grads.push(g);
    }
    Ok((-sum / norm, grads))
}

/// Token-level clip-higher loss: minus the surrogate summed over every token
/// of every trajectory, divided by the batch token count. Ratios use each
/// token's own behavior log-prob. Returns the loss and dL/dlogp per token.
pub fn token_level_ppo_loss<T: Scalar>(trajs: &[Trajectory<T>], clip: &ClipParams<T>) -> Result<(T, Vec<Vec<T>>)> {
    let total = trajs.iter().map(Trajectory::len).sum();
    ppo_part(trajs, clip, total)
}

/// Mean negative log-likelihood over the tokens of positive responses; 0 when
/// there are none.
pub fn positive_example_nll<T: Scalar>(trajs: &[Trajectory<T>], reward_threshold: T) -> T {
    let mut sum = T::zero();
    let mut count = 0usize;
    for t in trajs.iter().filter(|t| t.reward > reward_threshold) {
        for &lp in &t.current_logprobs {
            sum -= lp;
            count += 1;
        }
    }
    if count == 0 {
        T::zero()
    } else {
        sum / T::from_usize(count).expect("count fits")
    }
}

/// `ppo + mu·nll + value_coeff·value_mse` with default positive threshold.
pub fn combined_loss<T: Scalar>(trajs: &[Trajectory<T>], clip: &ClipParams<T>, mu: T, value_coeff: T) -> Result<LossBreakdown<T>> {
    let cfg = LossConfig::new(*clip, mu, value_coeff)?;
    Ok(combined_loss_with_grads(trajs, &cfg, None)?.0)
}

/// Full loss and per-token derivatives. `norm` defaults to this batch's own
/// token counts.
pub fn combined_loss_with_grads<T: Scalar>(
    trajs: &[Trajectory<T>],
    cfg: &LossConfig<T>,
    norm: Option<Normalizers>,
) -> Result<(LossBreakdown<T>, Vec<TokenGrads<T>>)> {
    let norm = norm.unwrap_or_else(|| Normalizers::of(trajs, cfg.positive_threshold));
    for t in trajs {
        check_populated(t, true)?;
    }
    let (ppo_loss, ppo_grads) = ppo_part(trajs, &cfg.clip, norm.total_tokens)?;
    let total_n = T::from_usize(norm.total_tokens).expect("count fits");
    let pos_n = T::from_usize(norm.positive_tokens.max(1)).expect("count fits");
    let two = T::of(2.0);

    let mut nll_loss = T::zero();
    let mut value_loss = T::zero();
    let mut grads = Vec::with_capacity(trajs.len());
    for (t, mut logp) in trajs.iter().zip(ppo_grads) {
        let positive = t.reward > cfg.positive_threshold;
        let mut value = Vec::with_capacity(t.len());
        for i in 0..t.len() {
            if positive {
                nll_loss -= t.current_logprobs[i] / pos_n;
                logp[i] -= cfg.mu / pos_n;
            }
            let err = t.values[i] - t.value_targets[i];
            value_loss += err * err / total_n;
            value.push(cfg.value_coeff * two * err / total_n);
        }
        grads.push(TokenGrads { logp, value });
    }
    let total = ppo_loss + cfg.mu * nll_loss + cfg.value_coeff * value_loss;
    let token_count = trajs.iter().map(Trajectory::len).sum();
    Ok((LossBreakdown { ppo_loss, value_loss, nll_loss, total, token_count }, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Prompt;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn symmetric_ppo(r: f64, a: f64, eps: f64) -> f64 {
        let clipped = r.clamp(1.0 - eps, 1.0 + eps);
        (r * a).min(clipped * a)
    }

    /// Trajectory with ratio 1 everywhere, so each token's surrogate is its advantage.
    fn with_advantages(adv: &[f64]) -> Trajectory<f64> {
        let mut t = Trajectory::empty(Arc::new(Prompt::synthetic(0, 1, vec![])), 0);
        let n = adv.len();
        t.tokens = vec![1; n];
        t.behavior_logprobs = vec![-0.3; n];
        t.current_logprobs = vec![-0.3; n];
        t.advantages = adv.to_vec();
        t.values = vec![0.0; n];
        t.value_targets = vec![0.0; n];
        t
    }

    #[test]
    fn clip_examples() {
        let c = ClipParams::new(0.2, 0.3).unwrap();
        assert_eq!(clip_higher_term(1.0, 2.5, &c).unwrap(), 2.5);
        assert_eq!(clip_higher_term(1.5, 1.0, &c).unwrap(), 1.3);
        assert_eq!(clip_higher_term(0.5, -1.0, &c).unwrap(), -0.8);
        assert!(clip_higher_term(f64::NAN, 1.0, &c).is_err());
        assert!(clip_higher_term(1.0, f64::INFINITY, &c).is_err());
        assert!(ClipParams::new(1.2, 0.3).is_err());
    }

    #[test]
    fn token_level_vs_per_response() {
        let batch = vec![with_advantages(&[2.0]), with_advantages(&[1.0, 1.0, 1.0])];
        let (loss, grads) = token_level_ppo_loss(&batch, &ClipParams::default()).unwrap();
        assert_eq!(loss, -1.25);
        assert_eq!(grads[1], vec![-0.25; 3]);
        // Per-response averaging would weight the long response's tokens less.
        let per_response = -(2.0 + (1.0 + 1.0 + 1.0) / 3.0) / 2.0;
        assert_eq!(per_response, -1.5);
    }

    #[test]
    fn zero_advantages_zero_loss() {
        let batch = vec![with_advantages(&[0.0, 0.0])];
        assert_eq!(token_level_ppo_loss(&batch, &ClipParams::default()).unwrap().0, 0.0);
        assert!(token_level_ppo_loss::<f64>(&[], &ClipParams::default()).is_err());
    }

    #[test]
    fn nll_examples() {
        let mut t = with_advantages(&[0.0, 0.0]);
        t.current_logprobs = vec![-0.5, -1.0];
        t.reward = 1.0;
        assert_eq!(positive_example_nll(&[t.clone()], 0.5), 0.75);
        t.reward = 0.0;
        assert_eq!(positive_example_nll(&[t.clone()], 0.5), 0.0);
        t.reward = 1.0;
        t.current_logprobs = vec![0.0, 0.0];
        assert_eq!(positive_example_nll(&[t], 0.5), 0.0);
    }

    #[test]
    fn combined_example() {
        // ppo = -(-2), nll = 0.75, value = 0
        let mut t = with_advantages(&[-2.0, -2.0]);
        t.current_logprobs = vec![-0.5, -1.0];
        t.behavior_logprobs = t.current_logprobs.clone();
        t.reward = 1.0;
        let lb = combined_loss(&[t], &ClipParams::default(), 0.1, 0.5).unwrap();
        assert_eq!(lb.ppo_loss, 2.0);
        assert_eq!(lb.nll_loss, 0.75);
        assert_eq!(lb.value_loss, 0.0);
        assert!((lb.total - 2.075).abs() < 1e-12);
        assert_eq!(lb.token_count, 2);
    }

    #[test]
    fn mu_zero_drops_nll() {
        let mut t = with_advantages(&[0.5, -1.0]);
        t.reward = 1.0;
        t.values = vec![0.2, 0.4];
        t.value_targets = vec![1.0, 1.0];
        let lb = combined_loss(&[t], &ClipParams::default(), 0.0, 0.5).unwrap();
        assert!((lb.total - (lb.ppo_loss + 0.5 * lb.value_loss)).abs() < 1e-12);
    }

    #[test]
    fn split_batches_recombine() {
        let mut a = with_advantages(&[0.7, -0.2, 1.1]);
        a.current_logprobs = vec![-0.1, -0.5, -0.2];
        a.reward = 1.0;
        let mut b = with_advantages(&[-0.4]);
        b.current_logprobs = vec![-0.9];
        b.values = vec![0.3];
        let cfg = LossConfig::default();
        let batch = vec![a.clone(), b.clone()];
        let (whole, _) = combined_loss_with_grads(&batch, &cfg, None).unwrap();
        let norm = Normalizers::of(&batch, cfg.positive_threshold);
        let mut parts = LossBreakdown::zero();
        for part in [vec![b], vec![a]] {
            parts.accumulate(&combined_loss_with_grads(&part, &cfg, Some(norm)).unwrap().0);
        }
        assert!((whole.total - parts.total).abs() < 1e-12);
        assert_eq!(whole.token_count, parts.token_count);
    }

    proptest! {
        #[test]
        fn surrogate_never_exceeds_unclipped(r in 0.01f64..5.0, a in -5.0f64..5.0, lo in 0.01f64..0.99, hi in 0.01f64..2.0) {
            let c = ClipParams::new(lo, hi).unwrap();
            prop_assert!(clip_higher_term(r, a, &c).unwrap() <= r * a);
        }

        #[test]
        fn equal_bounds_reduce_to_symmetric(r in 0.01f64..5.0, a in -5.0f64..5.0, eps in 0.01f64..0.99) {
            let c = ClipParams::symmetric(eps).unwrap();
            prop_assert!((clip_higher_term(r, a, &c).unwrap() - symmetric_ppo(r, a, eps)).abs() <= 1e-12);
        }

        #[test]
        fn loss_is_order_invariant(advs in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 1..6), 1..6),
                                   shift in proptest::collection::vec(-0.5f64..0.5, 30)) {
            let mut batch: Vec<Trajectory<f64>> = advs.iter().map(|a| with_advantages(a)).collect();
            let mut k = 0;
            for t in &mut batch {
                for lp in &mut t.current_logprobs {
                    *lp += shift[k % shift.len()];
                    k += 1;
                }
            }
            let c = ClipParams::default();
            let (l1, _) = token_level_ppo_loss(&batch, &c).unwrap();
            batch.reverse();
            let (l2, _) = token_level_ppo_loss(&batch, &c).unwrap();
            prop_assert!((l1 - l2).abs() <= 1e-12);
            // split and token-weighted recombination
            let mid = batch.len() / 2;
            let (x, y) = batch.split_at(mid);
            let nx: usize = x.iter().map(Trajectory::len).sum();
            let ny: usize = y.iter().map(Trajectory::len).sum();
            let lx = if nx > 0 { token_level_ppo_loss(x, &c).unwrap().0 } else { 0.0 };
            let ly = token_level_ppo_loss(y, &c).unwrap().0;
            let recombined = (lx * nx as f64 + ly * ny as f64) / (nx + ny) as f64;
            prop_assert!((recombined - l1).abs() <= 1e-12);
        }
    }
}
