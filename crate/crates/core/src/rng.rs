//! Counter-based random streams.
//!
//! Every random draw in the crate is addressed by a key tuple such as
//! `(seed, frame, pixel, event_index)`. The tuple is hashed into a fresh
//! ChaCha seed, so a draw never depends on how many other draws happened
//! before it or on which thread produced them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key tuple into a single 64-bit stream id.
pub fn mix(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// Hashes a name into a subsystem id.
pub fn name_key(name: &str) -> u64 {
    name.bytes()
        .fold(0xCBF2_9CE4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01B3))
}

/// A keyed source of uniform and Gaussian draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, keys: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.seed, keys))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&self, keys: &[u64]) -> f64 {
        self.rng(keys).random::<f64>()
    }

    /// Uniform draw in `[-1, 1]`.
    pub fn symmetric(&self, keys: &[u64]) -> f64 {
        2.0 * self.uniform(keys) - 1.0
    }

    /// Standard normal draw.
    pub fn normal(&self, keys: &[u64]) -> f64 {
        self.rng(keys).sample(StandardNormal)
    }
}
