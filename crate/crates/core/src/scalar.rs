use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the numeric core is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Width in bytes of the little-endian encoding.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);

    /// Panics if `bytes.len() != Self::BYTES`.
    fn read_le(bytes: &[u8]) -> Self;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

/// Numerically stable log-softmax over the entries selected by `mask`.
/// Entries outside the mask get `-inf`.
pub fn log_softmax_masked<T: Scalar>(logits: &[T], mask: u64) -> Vec<T> {
    let mut max = T::neg_infinity();
    for (i, &z) in logits.iter().enumerate() {
        if mask >> i & 1 == 1 && z > max {
            max = z;
        }
    }
    let mut sum = T::zero();
    for (i, &z) in logits.iter().enumerate() {
        if mask >> i & 1 == 1 {
            sum += (z - max).exp();
        }
    }
    let log_norm = max + sum.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, &z)| if mask >> i & 1 == 1 { z - log_norm } else { T::neg_infinity() })
        .collect()
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mask = if logits.len() >= 64 { u64::MAX } else { (1u64 << logits.len()) - 1 };
    log_softmax_masked(logits, mask).into_iter().map(Float::exp).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in proptest::collection::vec(-30.0f64..30.0, 1..64)) {
            let p = softmax(&logits);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_entries_are_excluded() {
        let lp = log_softmax_masked(&[0.0f64, 5.0, 0.0], 0b101);
        assert_eq!(lp[1], f64::NEG_INFINITY);
        assert!((lp[0] - (0.5f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn f32_roundtrip_bytes() {
        let mut buf = Vec::new();
        1.25f32.write_le(&mut buf);
        assert_eq!(f32::read_le(&buf), 1.25);
    }
}
