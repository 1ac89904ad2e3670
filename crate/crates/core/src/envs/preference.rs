//! Synthetic pairwise preference oracle.
//!
//! A hidden rubric scores each response; the preference of `a` over `b` is
//! `sigmoid(score(a) − score(b))`, read as the probability of answering
//! "YES, a is better".
//!
//! `score(s) = coverage(s) − |len(s) − target_len| / target_len`, where
//! `coverage` is the fraction of the rubric's required characters present in
//! `s` and `len` counts characters.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng;

const POOL: &[u8] = b"UDLR0123456789+-*/()";

#[derive(Debug, Clone, PartialEq)]
pub struct Rubric {
    pub target_len: usize,
    pub required: Vec<char>,
}

impl Rubric {
    pub fn from_seed(rubric_seed: u64) -> Self {
        let mut rng = rng::keyed(&[0x9E1F, rubric_seed]);
        let target_len = rng.gen_range(3..=12);
        let required = POOL.choose_multiple(&mut rng, 2).map(|&b| b as char).collect();
        Self { target_len, required }
    }

    pub fn score(&self, s: &str) -> f64 {
        let len = s.chars().count() as f64;
        let target = self.target_len as f64;
        let coverage = if self.required.is_empty() {
            1.0
        } else {
            self.required.iter().filter(|&&c| s.contains(c)).count() as f64 / self.required.len() as f64
        };
        coverage - (len - target).abs() / target
    }

    pub fn preference(&self, a: &str, b: &str) -> f64 {
        sigmoid(self.score(a) - self.score(b))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that `a` is preferred to `b` under the rubric derived from `rubric_seed`.
pub fn pairwise_preference(a: &str, b: &str, rubric_seed: u64) -> f64 {
    Rubric::from_seed(rubric_seed).preference(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_is_half() {
        assert_eq!(pairwise_preference("UDLR", "UDLR", 9), 0.5);
    }

    #[test]
    fn hand_evaluated_rubric() {
        let r = Rubric { target_len: 5, required: vec!['U', 'D'] };
        // score(a) = 1 - 0 = 1; score(b) = 0 - 15/5 = -3
        let p = r.preference("UUDLR", &"L".repeat(20));
        assert!((p - 1.0 / (1.0 + (-4.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.982_013_790_037_908_4).abs() < 1e-15);
    }

    #[test]
    fn saturates_toward_one() {
        let r = Rubric { target_len: 3, required: vec!['U'] };
        assert!(r.preference("UUU", &"D".repeat(400)) > 1.0 - 1e-12);
    }

    proptest! {
        #[test]
        fn antisymmetric(a in "[UDLR0-9]{0,30}", b in "[UDLR0-9]{0,30}", seed in any::<u64>()) {
            let s = pairwise_preference(&a, &b, seed) + pairwise_preference(&b, &a, seed);
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}
