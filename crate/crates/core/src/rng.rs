//! Seeded random streams with deterministic substream splitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Exp1;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; used only to derive keys.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the substream reached from `seed` by successive splits.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(RngStream::new(seed), |r, c| r.split(*c)).key()
}

/// A single-owner pseudo-random stream.
///
/// Two streams built from the same key produce the same draws for the same
/// call sequence. `split` derives a child stream from the key alone, so the
/// children do not depend on how many draws the parent has made.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::from_key(mix(seed))
    }

    fn from_key(key: u64) -> Self {
        let mut bytes = [0u8; 32];
        let mut state = key;
        for chunk in bytes.chunks_exact_mut(8) {
            state = mix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self {
            key,
            inner: ChaCha12Rng::from_seed(bytes),
        }
    }

    /// Independent child stream identified by `child_id`.
    pub fn split(&self, child_id: u64) -> Self {
        Self::from_key(mix(self.key ^ mix(child_id.wrapping_add(1).wrapping_mul(GOLDEN))))
    }

    /// Key identifying this stream.
    pub fn key(&self) -> u64 {
        self.key
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in (0, 1].
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }

    /// Exponential draw with the given rate; `rate` must be positive.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        self.unit_exponential() / rate
    }

    pub fn unit_exponential(&mut self) -> f64 {
        self.inner.sample(Exp1)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Index drawn uniformly from `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}
