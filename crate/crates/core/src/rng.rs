//! Counter-based deterministic randomness.
//!
//! Every stream is a ChaCha8 keystream whose key is derived from a tuple of
//! integers, so any `(seed, a, b)` triple can be regenerated independently of
//! scheduling order or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one 64-bit key.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x5EED_u64, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// A keyed generator. Streams for distinct keys are independent.
pub fn keyed(words: &[u64]) -> ChaCha8Rng {
    let k = mix(words);
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(k.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Uniform draw in `[0, 1)` for position `index` of the stream keyed by `key`.
/// Random access: the value does not depend on which other indices were drawn.
pub fn uniform_at(key: &[u64], index: u64) -> f64 {
    let mut rng = keyed(key);
    rng.set_word_pos(u128::from(index) * 2);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stream of uniforms with random access by index; keeps one generator and
/// seeks only when the requested index is not the next one.
#[derive(Debug, Clone)]
pub struct UniformStream {
    rng: ChaCha8Rng,
    next: u64,
}

impl UniformStream {
    pub fn new(key: &[u64]) -> Self {
        Self { rng: keyed(key), next: 0 }
    }

    pub fn at(&mut self, index: u64) -> f64 {
        if index != self.next {
            self.rng.set_word_pos(u128::from(index) * 2);
        }
        self.next = index + 1;
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
