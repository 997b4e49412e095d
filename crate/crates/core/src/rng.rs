//! Seeded random streams. Every stochastic step in the crate draws from an
//! [`RngState`], and independent streams are derived from one master seed
//! with [`RngState::split`], so a run is fully determined by its seed.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{contract, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `stream` under `seed`. Stable across releases.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; does not advance `self`.
    pub fn split(&self, stream: u64) -> RngState {
        RngState::new(derive_seed(self.seed, stream))
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    /// Uniform on `[lo, hi)` per entry.
    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = lo + (hi - lo) * self.uniform();
        }
        m
    }
}

/// I.i.d. normal matrix.
pub fn gaussian_sample(
    rng: &mut RngState,
    rows: usize,
    cols: usize,
    mean: f64,
    stddev: f64,
) -> Result<Matrix> {
    if !(stddev >= 0.0) || !stddev.is_finite() {
        return contract(alloc::format!("stddev must be finite and non-negative, got {stddev}"));
    }
    let mut m = Matrix::filled(rows, cols, mean);
    if stddev > 0.0 {
        for v in m.as_mut_slice() {
            *v += stddev * rng.normal();
        }
    }
    Ok(m)
}
