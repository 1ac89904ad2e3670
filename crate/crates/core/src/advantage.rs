//! Returns, value targets and advantage estimation.
//!
//! Value targets and policy advantages are estimated with separate GAE
//! λ parameters. The policy λ can follow the response length,
//! `λ = 1 − 1/(α·l)`, so short and long responses see a comparable spread of
//! TD errors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeParams<T = f64> {
    pub gamma: T,
    pub lambda_value: T,
    pub alpha_gae: T,
    /// Fixed policy λ. `None` selects the length-adaptive λ.
    pub lambda_policy_fixed: Option<T>,
}

impl<T: Scalar> GaeParams<T> {
    pub fn new(gamma: T, lambda_value: T, alpha_gae: T, lambda_policy_fixed: Option<T>) -> Result<Self> {
        let p = Self { gamma, lambda_value, alpha_gae, lambda_policy_fixed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval("gamma", self.gamma)?;
        unit_interval("lambda_value", self.lambda_value)?;
        if let Some(l) = self.lambda_policy_fixed {
            unit_interval("lambda_policy", l)?;
        }
        if !(self.alpha_gae > T::zero()) || !self.alpha_gae.is_finite() {
            return Err(Error::invalid(format!("alpha_gae must be > 0, got {}", self.alpha_gae)));
        }
        Ok(())
    }

    /// Policy λ for a response of `length` tokens.
    pub fn lambda_policy(&self, length: usize) -> Result<T> {
        match self.lambda_policy_fixed {
            Some(l) => Ok(l),
            None => length_adaptive_lambda(length, self.alpha_gae),
        }
    }
}

impl Default for GaeParams<f64> {
    fn default() -> Self {
        Self { gamma: 1.0, lambda_value: 1.0, alpha_gae: 0.05, lambda_policy_fixed: None }
    }
}

fn unit_interval<T: Scalar>(name: &str, x: T) -> Result<()> {
    if x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in [0, 1], got {x}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageResult<T = f64> {
    pub advantages: Vec<T>,
    pub value_targets: Vec<T>,
}

pub fn monte_carlo_returns<T: Scalar>(rewards: &[T], gamma: T) -> Result<Vec<T>> {
    if rewards.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    unit_interval("gamma", gamma)?;
    let mut out = vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// GAE by the backward recursion `A_t = δ_t + γλ A_{t+1}`.
/// `bootstrap_value` stands in for `V` after the last token (0 when terminal).
pub fn gae_advantages<T: Scalar>(
    rewards: &[T],
    values: &[T],
    bootstrap_value: T,
    gamma: T,
    lambda: T,
) -> Result<Vec<T>> {
    if rewards.len() != values.len() {
        return Err(Error::invalid(format!(
            "rewards ({}) and values ({}) differ in length",
            rewards.len(),
            values.len()
        )));
    }
    unit_interval("gamma", gamma)?;
    unit_interval("lambda", lambda)?;
    let n = rewards.len();
    let mut adv = vec![T::zero(); n];
    let mut next_adv = T::zero();
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    Ok(adv)
}

/// `max(0, 1 − 1/(α·l))`.
pub fn length_adaptive_lambda<T: Scalar>(length: usize, alpha_gae: T) -> Result<T> {
    if length == 0 {
        return Err(Error::invalid("length must be at least 1"));
    }
    if !(alpha_gae > T::zero()) {
        return Err(Error::invalid(format!("alpha_gae must be > 0, got {alpha_gae}")));
    }
    let l = T::from_usize(length).expect("length fits");
    Ok((T::one() - T::one() / (alpha_gae * l)).max(T::zero()))
}

/// Value targets with `lambda_value`, advantages with the policy λ.
///
/// Truncated responses bootstrap from the value of the last token; responses
/// that ended with EOS are terminal.
pub fn decoupled_estimates<T: Scalar>(traj: &Trajectory<T>, params: &GaeParams<T>) -> Result<AdvantageResult<T>> {
    let n = traj.len();
    if n == 0 {
        return Err(Error::invalid("empty trajectory"));
    }
    if traj.values.len() != n {
        return Err(Error::invalid("trajectory values not populated"));
    }
    let rewards = traj.token_rewards();
    let bootstrap = if traj.truncated { traj.values[n - 1] } else { T::zero() };
    let value_adv = gae_advantages(&rewards, &traj.values, bootstrap, params.gamma, params.lambda_value)?;
    let value_targets = value_adv.iter().zip(&traj.values).map(|(&a, &v)| a + v).collect();
    let lambda_policy = params.lambda_policy(n)?;
    let advantages = if lambda_policy == params.lambda_value {
        value_adv
    } else {
        gae_advantages(&rewards, &traj.values, bootstrap, params.gamma, lambda_policy)?
    };
    Ok(AdvantageResult { advantages, value_targets })
}

/// Fills `advantages` and `value_targets` in place.
pub fn assign_estimates<T: Scalar>(traj: &mut Trajectory<T>, params: &GaeParams<T>) -> Result<()> {
    let AdvantageResult { advantages, value_targets } = decoupled_estimates(traj, params)?;
    traj.advantages = advantages;
    traj.value_targets = value_targets;
    Ok(())
}
