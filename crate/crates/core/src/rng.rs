//! Counter-based random streams.
//!
//! Every random draw in the crate is addressed by a tuple of integers
//! (seed, trial, node, coordinate, ...). The tuple is hashed into the state of
//! a short SplitMix64 stream, so a value never depends on the order in which
//! other values were generated. This is what makes parallel Monte Carlo and
//! bridge refinement bitwise reproducible.

use rand_core::{impls, RngCore};
use rand_distr::{Distribution, StandardNormal};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a single 64-bit key.
#[inline]
pub fn key(words: &[u64]) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C909u64;
    for &w in words {
        h = mix64(h ^ w.wrapping_add(GOLDEN_GAMMA));
    }
    h
}

/// Domain tags so that streams used for different purposes never collide.
pub mod tag {
    pub const PATH: u64 = 0x5041_5448;
    pub const BOOTSTRAP: u64 = 0x424F_4F54;
    pub const NET_PAIRS: u64 = 0x4E45_5450;
    pub const FIELD: u64 = 0x4649_454C;
    pub const PROBE: u64 = 0x5052_4F42;
    pub const SYNTH: u64 = 0x5359_4E54;
}

/// A SplitMix64 stream started from a hashed key.
#[derive(Debug, Clone)]
pub struct KeyedStream {
    state: u64,
}

impl KeyedStream {
    pub fn new(key: u64) -> Self {
        Self { state: key }
    }

    pub fn from_words(words: &[u64]) -> Self {
        Self::new(key(words))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (n > 0), Lemire's multiply-shift.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for KeyedStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}

/// Standard normal draw addressed by `words`.
#[inline]
pub fn normal_at(words: &[u64]) -> f64 {
    KeyedStream::from_words(words).normal()
}

/// Uniform draw in `[0, 1)` addressed by `words`.
#[inline]
pub fn uniform_at(words: &[u64]) -> f64 {
    KeyedStream::from_words(words).uniform()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_draws_are_pure_functions_of_the_key() {
        let a = normal_at(&[7, 1, 2, 0]);
        let b = normal_at(&[7, 1, 2, 0]);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a.to_bits(), normal_at(&[7, 1, 3, 0]).to_bits());
    }

    #[test]
    fn key_is_order_sensitive() {
        assert_ne!(key(&[1, 2]), key(&[2, 1]));
    }

    #[test]
    fn uniform_moments() {
        let n = 200_000u64;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for i in 0..n {
            let u = uniform_at(&[tag::SYNTH, i]);
            assert!((0.0..1.0).contains(&u));
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / n as f64).sqrt());
        assert!((var - 1.0 / 12.0).abs() < 2e-3);
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = KeyedStream::new(3);
        for _ in 0..1000 {
            assert!(s.below(7) < 7);
        }
    }
}
