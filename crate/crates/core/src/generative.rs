//! Sampling from a trained denoising stack and Parzen-window evaluation.
//!
//! The chain alternates `X̃ ~ c(X̃ | X)` with a clean pass through the
//! whole stack, taking the decoder mean as the next state.

use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{contract, Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::model::{reconstruct_clean, StackParams};
use crate::objectives::{corrupt, CorruptionSpec};
use crate::rng::RngState;

pub const DEFAULT_BURN_IN: usize = 100;

/// `{0.1, 0.2, …, 1.0}`.
pub fn default_sigma_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

/// Runs `steps` transitions from `init` and returns every `thinning`-th
/// state (after step `thinning`, `2·thinning`, ...) as matrix rows.
pub fn gsn_chain(
    stack: &StackParams,
    init: &[f64],
    steps: usize,
    corruption: &CorruptionSpec,
    rng: &mut RngState,
    thinning: usize,
) -> Result<Matrix> {
    if steps == 0 || thinning == 0 {
        return contract("chain needs steps ≥ 1 and thinning ≥ 1");
    }
    let d = stack.input_width();
    if init.len() != d {
        return Err(Error::Shape {
            op: "gsn_chain",
            left: (1, d),
            right: (1, init.len()),
        });
    }
    let mut state = Matrix::row_vector(init);
    let mut kept = Vec::with_capacity(steps / thinning * d);
    for t in 1..=steps {
        let noisy = corrupt(corruption, &state, rng)?;
        state = reconstruct_clean(stack, &noisy)?;
        if t % thinning == 0 {
            kept.extend_from_slice(state.as_slice());
        }
    }
    Matrix::from_vec(kept.len() / d, d, kept)
}

/// Isotropic Gaussian mixture centred on the samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ParzenModel {
    pub components: Matrix,
    pub sigma: f64,
}

pub fn parzen_fit(samples: Matrix, sigma: f64) -> Result<ParzenModel> {
    if samples.rows() == 0 || samples.cols() == 0 {
        return contract("Parzen model needs at least one sample");
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return contract("Parzen bandwidth must be positive");
    }
    Ok(ParzenModel {
        components: samples,
        sigma,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.map(|v| libm::exp(v - max)).sum::<f64>())
}

fn loglik_from_distances(dist: &[f64], sigma: f64, d: usize) -> f64 {
    let two_var = 2.0 * sigma * sigma;
    let lse = log_sum_exp(dist.iter().map(|&q| -q / two_var));
    lse - libm::log(dist.len() as f64)
        - 0.5 * d as f64 * libm::log(core::f64::consts::TAU * sigma * sigma)
}

fn distances(components: &Matrix, x: &[f64]) -> Vec<f64> {
    components.iter_rows().map(|s| squared_distance(x, s)).collect()
}

pub fn parzen_loglik(model: &ParzenModel, x: &[f64]) -> Result<f64> {
    let d = model.components.cols();
    if x.len() != d {
        return Err(Error::Shape {
            op: "parzen_loglik",
            left: (1, d),
            right: (1, x.len()),
        });
    }
    Ok(loglik_from_distances(&distances(&model.components, x), model.sigma, d))
}

/// Per-row log-likelihoods.
pub fn parzen_loglik_rows(model: &ParzenModel, x: &Matrix) -> Result<Vec<f64>> {
    x.iter_rows().map(|r| parzen_loglik(model, r)).collect()
}

/// Mean validation log-likelihood for each grid bandwidth.
pub fn parzen_grid_scores(samples: &Matrix, validation: &Matrix, grid: &[f64]) -> Result<Vec<f64>> {
    if samples.rows() == 0 || validation.rows() == 0 || grid.is_empty() {
        return contract("bandwidth selection needs samples, validation rows and a grid");
    }
    if grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return contract("bandwidth grid must be positive");
    }
    if samples.cols() != validation.cols() {
        return Err(Error::Shape {
            op: "parzen_select_sigma",
            left: samples.shape(),
            right: validation.shape(),
        });
    }
    let d = samples.cols();
    let mut totals = alloc::vec![0.0; grid.len()];
    for row in validation.iter_rows() {
        let dist = distances(samples, row);
        for (t, &s) in totals.iter_mut().zip(grid) {
            *t += loglik_from_distances(&dist, s, d);
        }
    }
    Ok(totals.into_iter().map(|t| t / validation.rows() as f64).collect())
}

/// Picks the bandwidth maximizing mean validation log-likelihood; ties go
/// to the smaller bandwidth.
pub fn select_from_scores(grid: &[f64], scores: &[f64]) -> f64 {
    let mut best = (grid[0], scores[0]);
    for (&s, &v) in grid.iter().zip(scores).skip(1) {
        if v > best.1 || (v == best.1 && s < best.0) {
            best = (s, v);
        }
    }
    best.0
}

pub fn parzen_select_sigma(samples: &Matrix, validation: &Matrix, grid: &[f64]) -> Result<f64> {
    let scores = parzen_grid_scores(samples, validation, grid)?;
    Ok(select_from_scores(grid, &scores))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeConfig {
    /// Retained samples `S`.
    pub samples: usize,
    pub sigma_grid: Vec<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub corruption: CorruptionSpec,
}

impl GenerativeConfig {
    pub fn new(samples: usize, corruption: CorruptionSpec) -> Self {
        GenerativeConfig {
            samples,
            sigma_grid: default_sigma_grid(),
            burn_in: DEFAULT_BURN_IN,
            thinning: 1,
            corruption,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeEval {
    pub mean_ll: f64,
    /// Sample standard deviation of per-example LL over `√n`.
    pub stderr: f64,
    pub sigma: f64,
    pub samples: Matrix,
}

/// Draws `S` chain samples starting from a random validation example.
pub fn draw_samples(stack: &StackParams, dataset: &Dataset, config: &GenerativeConfig, rng: &mut RngState) -> Result<Matrix> {
    if dataset.valid.is_empty() {
        return contract("chain initialization needs a validation split");
    }
    if config.samples == 0 || config.thinning == 0 {
        return contract("need at least one retained sample");
    }
    let start = rng.below(dataset.valid.len());
    let mut init = dataset.valid.x.row(start).to_vec();
    if config.burn_in > 0 {
        let warm = gsn_chain(stack, &init, config.burn_in, &config.corruption, rng, config.burn_in)?;
        init = warm.row(0).to_vec();
    }
    gsn_chain(stack, &init, config.samples * config.thinning, &config.corruption, rng, config.thinning)
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var / n))
}

/// Samples, fits σ on validation, and scores the test split.
pub fn evaluate_generative(stack: &StackParams, dataset: &Dataset, config: &GenerativeConfig, rng: &mut RngState) -> Result<GenerativeEval> {
    if dataset.test.is_empty() {
        return contract("generative evaluation needs a test split");
    }
    let samples = draw_samples(stack, dataset, config, rng)?;
    let sigma = parzen_select_sigma(&samples, &dataset.valid.x, &config.sigma_grid)?;
    let model = parzen_fit(samples, sigma)?;
    let lls = parzen_loglik_rows(&model, &dataset.test.x)?;
    let (mean_ll, stderr) = mean_and_stderr(&lls);
    Ok(GenerativeEval {
        mean_ll,
        stderr,
        sigma,
        samples: model.components,
    })
}

/// Index of the closest training row; ties go to the lowest index.
pub fn nearest_training_sample(sample: &[f64], train: &Matrix) -> Result<usize> {
    if train.rows() == 0 {
        return contract("empty training set");
    }
    if sample.len() != train.cols() {
        return Err(Error::Shape {
            op: "nearest_training_sample",
            left: (1, sample.len()),
            right: train.shape(),
        });
    }
    let mut best = (0, f64::INFINITY);
    for (i, row) in train.iter_rows().enumerate() {
        let d = squared_distance(sample, row);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}
