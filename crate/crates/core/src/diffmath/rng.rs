use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;

/// Seeded ChaCha20 stream.
///
/// Sub-streams are derived from the original seed and a label, never from
/// the current position, so adding draws in one component does not shift
/// the draws seen by another.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha20Rng,
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `label`.
    pub fn substream(&self, label: &str) -> Rng {
        let mut inner = ChaCha20Rng::seed_from_u64(self.seed);
        inner.set_stream(fnv1a(label));
        Rng {
            seed: self.seed ^ fnv1a(label),
            inner,
        }
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Index drawn proportionally to non-negative `weights`.
    pub fn weighted_index(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut target = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                return i;
            }
            target -= w;
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `rows x cols` tensor of i.i.d. `Normal(mu, sigma²)` draws.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, mu: f64, sigma: f64) -> Tensor {
    debug_assert!(sigma >= 0.0);
    let data = (0..rows * cols).map(|_| mu + sigma * rng.normal()).collect();
    Tensor::from_vec_unchecked(rows, cols, data)
}

/// Glorot-uniform initialisation for a `rows x cols` weight.
pub fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform_in(-limit, limit)).collect();
    Tensor::from_vec_unchecked(rows, cols, data)
}
