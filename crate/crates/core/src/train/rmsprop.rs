use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::model::StackParams;
use crate::objectives::StackGrads;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 0.01,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        RmsPropConfig {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return contract(format!("rms-prop decay must lie in (0,1), got {}", self.decay));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || !(self.epsilon > 0.0) {
            return contract("rms-prop needs a finite learning rate >= 0 and epsilon > 0");
        }
        Ok(())
    }
}

/// Running mean-square accumulators, one per parameter tensor:
/// `r ← ρr + (1-ρ)g²`, `θ ← θ - η·g/√(r+ε)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    accum: Vec<Vec<Vec<f64>>>,
}

impl RmsPropState {
    pub fn new(config: RmsPropConfig, stack: &StackParams) -> Self {
        let accum = stack
            .layers()
            .iter()
            .map(|l| l.tensors().iter().map(|t| vec![0.0; t.len()]).collect())
            .collect();
        RmsPropState { config, accum }
    }

    /// Accumulators of layer `layer`, in tensor order.
    pub fn accumulators(&self, layer: usize) -> &[Vec<f64>] {
        &self.accum[layer]
    }

    /// Elementwise update of a single tensor; `multiplier` scales the step.
    pub fn step_tensor(config: &RmsPropConfig, accum: &mut [f64], params: &mut [f64], grads: &[f64], multiplier: f64) -> Result<()> {
        if accum.len() != params.len() || params.len() != grads.len() {
            return contract(format!(
                "rms-prop shapes disagree: {} accumulators, {} params, {} grads",
                accum.len(),
                params.len(),
                grads.len()
            ));
        }
        let rho = config.decay;
        let lr = config.learning_rate * multiplier;
        for ((r, p), &g) in accum.iter_mut().zip(params.iter_mut()).zip(grads) {
            *r = rho * *r + (1.0 - rho) * g * g;
            *p -= lr * g / libm::sqrt(*r + config.epsilon);
        }
        Ok(())
    }

    /// Updates every layer. `multipliers[i] == 0` leaves layer `i` and its
    /// accumulators untouched.
    pub fn step(&mut self, stack: &mut StackParams, grads: &StackGrads, multipliers: Option<&[f64]>) -> Result<()> {
        if grads.layers.len() != stack.depth() || self.accum.len() != stack.depth() {
            return contract("rms-prop state, gradients and stack differ in depth");
        }
        for i in 0..stack.depth() {
            let m = multipliers.map_or(1.0, |m| m[i]);
            if m == 0.0 {
                continue;
            }
            let g = grads.layers[i].tensors();
            let mut params = stack.layer_tensors_mut(i);
            if params.len() != g.len() || params.len() != self.accum[i].len() {
                return contract(format!("layer {} gradient does not match its parameters", i + 1));
            }
            for ((p, g), r) in params.iter_mut().zip(&g).zip(self.accum[i].iter_mut()) {
                Self::step_tensor(&self.config, r, p, g, m)?;
            }
        }
        Ok(())
    }
}
