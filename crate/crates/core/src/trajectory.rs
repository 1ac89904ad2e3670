use std::ops::Range;
use std::sync::Arc;

use crate::envs::PuzzleInstance;
use crate::scalar::Scalar;
use crate::vocab::{self, Token};

/// What the policy conditions on for one prompt: sparse prompt features and
/// the set of tokens the task may emit.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub id: u64,
    /// Allowed-token bit mask over the alphabet. EOS must be set.
    pub mask: u64,
    /// Sparse prompt encoding as `(index, value)` pairs.
    pub features: Vec<(u32, f64)>,
    pub instance: Option<PuzzleInstance>,
}

impl Prompt {
    pub fn from_instance(id: u64, instance: PuzzleInstance) -> Self {
        Self {
            id,
            mask: instance.task.token_mask(),
            features: crate::envs::prompt_features(&instance),
            instance: Some(instance),
        }
    }

    /// A prompt without an instance, for tests and synthetic batches.
    pub fn synthetic(id: u64, mask: u64, features: Vec<(u32, f64)>) -> Self {
        Self { id, mask, features, instance: None }
    }
}

/// One sampled response with everything the losses need.
///
/// Per-token arrays are all of length `len()` once populated; `values`,
/// `current_logprobs`, `advantages` and `value_targets` start empty and are
/// filled by the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T = f64> {
    pub prompt: Arc<Prompt>,
    pub attempt: u32,
    pub tokens: Vec<Token>,
    pub behavior_logprobs: Vec<T>,
    /// Snapshot version that generated each token.
    pub versions: Vec<u64>,
    /// Hit the length cap without emitting EOS.
    pub truncated: bool,
    /// Terminal reward, placed on the last token.
    pub reward: T,
    pub values: Vec<T>,
    pub current_logprobs: Vec<T>,
    pub advantages: Vec<T>,
    pub value_targets: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn empty(prompt: Arc<Prompt>, attempt: u32) -> Self {
        Self {
            prompt,
            attempt,
            tokens: Vec::new(),
            behavior_logprobs: Vec::new(),
            versions: Vec::new(),
            truncated: false,
            reward: T::zero(),
            values: Vec::new(),
            current_logprobs: Vec::new(),
            advantages: Vec::new(),
            value_targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_finished(&self) -> bool {
        self.truncated || self.tokens.last() == Some(&vocab::EOS)
    }

    /// Per-token rewards: zero everywhere except the terminal reward on the last token.
    pub fn token_rewards(&self) -> Vec<T> {
        let mut r = vec![T::zero(); self.len()];
        if let Some(last) = r.last_mut() {
            *last = self.reward;
        }
        r
    }

    pub fn answer_text(&self) -> String {
        vocab::decode(&self.tokens)
    }

    /// Maximal runs of equal version stamps, in token order.
    pub fn segments(&self) -> Vec<(u64, Range<usize>)> {
        let mut out: Vec<(u64, Range<usize>)> = Vec::new();
        for (i, &v) in self.versions.iter().enumerate() {
            match out.last_mut() {
                Some((lv, r)) if *lv == v => r.end = i + 1,
                _ => out.push((v, i..i + 1)),
            }
        }
        out
    }

    pub fn max_version(&self) -> Option<u64> {
        self.versions.iter().copied().max()
    }

    pub fn min_version(&self) -> Option<u64> {
        self.versions.iter().copied().min()
    }

    /// Importance ratios `exp(current − behavior)` per token.
    pub fn ratios(&self) -> Vec<T> {
        self.current_logprobs
            .iter()
            .zip(&self.behavior_logprobs)
            .map(|(&c, &b)| (c - b).exp())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_group_runs() {
        let p = Arc::new(Prompt::synthetic(0, 1, vec![]));
        let mut t = Trajectory::<f64>::empty(p, 0);
        t.tokens = vec![1, 2, 3, 4];
        t.versions = vec![3, 3, 4, 4];
        assert_eq!(t.segments(), vec![(3, 0..2), (4, 2..4)]);
        t.reward = 1.0;
        assert_eq!(t.token_rewards(), vec![0.0, 0.0, 0.0, 1.0]);
    }
}
