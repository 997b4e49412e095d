//! Reconstruction losses, corruption processes and layer regularizers, each
//! with an analytic gradient, plus the stack objective that combines them:
//!
//! `J(Λ) = mean_x L(x, x_r) + Σᵢ λⁱ Rⁱ(Θⁱ)`
//!
//! with layer `i` consuming a corrupted copy of its input. A one-layer stack
//! gives the single-autoencoder objective; deeper stacks give the joint one.
//! Losses and the contractive penalty are averaged over batch rows so that
//! learning rates and `λ` do not depend on minibatch size.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::matrix::Matrix;
use crate::model::{self, Activation, ForwardTrace, LayerParams, StackParams};
use crate::rng::{gaussian_sample, RngState};

/// Predictions are clamped to `[CE_CLAMP, 1 - CE_CLAMP]` before the log.
pub const CE_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossSpec {
    CrossEntropy,
    SquaredError,
}

fn check_unit_interval(m: &Matrix, what: &str) -> Result<()> {
    if let Some(v) = m.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return contract(format!("cross-entropy needs {what} in [0,1], found {v}"));
    }
    Ok(())
}

/// Summed loss over all examples and its gradient with respect to `x_r`.
pub fn loss_value_grad(spec: LossSpec, x: &Matrix, x_r: &Matrix) -> Result<(f64, Matrix)> {
    if x.shape() != x_r.shape() {
        return Err(Error::Shape {
            op: "loss",
            left: x.shape(),
            right: x_r.shape(),
        });
    }
    match spec {
        LossSpec::CrossEntropy => {
            let value = loss_value(spec, x, x_r)?;
            let grad = x.zip_map(x_r, |t, p| {
                let p = p.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
                -t / p + (1.0 - t) / (1.0 - p)
            })?;
            Ok((value, grad))
        }
        LossSpec::SquaredError => {
            let diff = x_r.sub(x)?;
            Ok((diff.frobenius_sq(), diff.scale(2.0)))
        }
    }
}

/// Summed loss only.
pub fn loss_value(spec: LossSpec, x: &Matrix, x_r: &Matrix) -> Result<f64> {
    match spec {
        LossSpec::CrossEntropy => {
            if x.shape() != x_r.shape() {
                return Err(Error::Shape {
                    op: "loss",
                    left: x.shape(),
                    right: x_r.shape(),
                });
            }
            check_unit_interval(x, "targets")?;
            check_unit_interval(x_r, "predictions")?;
            Ok(x.as_slice()
                .iter()
                .zip(x_r.as_slice())
                .map(|(&t, &p)| {
                    let p = p.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
                    -(t * libm::log(p) + (1.0 - t) * libm::log(1.0 - p))
                })
                .sum())
        }
        LossSpec::SquaredError => Ok(x_r.sub(x)?.frobenius_sq()),
    }
}

/// Gradient of the summed loss with respect to the output pre-activation.
/// Cross-entropy through a logistic output collapses to `x_r - x`.
fn output_delta(spec: LossSpec, act: Activation, x: &Matrix, x_r: &Matrix) -> Result<Matrix> {
    match (spec, act) {
        (LossSpec::CrossEntropy, Activation::Logistic) => {
            check_unit_interval(x, "targets")?;
            x_r.sub(x)
        }
        _ => {
            let (_, g) = loss_value_grad(spec, x, x_r)?;
            g.zip_map(x_r, |g, y| g * act.derivative_at_output(y))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptionKind {
    None,
    /// Additive isotropic Gaussian noise; `level` is the standard deviation.
    Gaussian,
    /// Each entry zeroed independently; `level` is the drop probability.
    Masking,
}

/// A conditional corruption process `q(x_c | x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub level: f64,
}

/// One realized corruption, kept so the backward pass (and gradient checks)
/// see exactly the noise the forward pass used.
#[derive(Clone, Debug, PartialEq)]
pub enum CorruptionDraw {
    Identity,
    Additive(Matrix),
    Mask(Matrix),
}

impl CorruptionSpec {
    pub const fn none() -> Self {
        CorruptionSpec {
            kind: CorruptionKind::None,
            level: 0.0,
        }
    }

    pub const fn gaussian(stddev: f64) -> Self {
        CorruptionSpec {
            kind: CorruptionKind::Gaussian,
            level: stddev,
        }
    }

    pub const fn masking(p: f64) -> Self {
        CorruptionSpec {
            kind: CorruptionKind::Masking,
            level: p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            CorruptionKind::None => Ok(()),
            CorruptionKind::Gaussian if self.level >= 0.0 && self.level.is_finite() => Ok(()),
            CorruptionKind::Masking if (0.0..=1.0).contains(&self.level) => Ok(()),
            _ => contract(format!("invalid {:?} corruption level {}", self.kind, self.level)),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == CorruptionKind::None || self.level == 0.0
    }

    /// Samples the noise for a `rows × cols` input. Identity corruptions
    /// consume no randomness.
    pub fn draw(&self, rows: usize, cols: usize, rng: &mut RngState) -> Result<CorruptionDraw> {
        self.validate()?;
        if self.is_identity() {
            return Ok(CorruptionDraw::Identity);
        }
        Ok(match self.kind {
            CorruptionKind::Gaussian => {
                CorruptionDraw::Additive(gaussian_sample(rng, rows, cols, 0.0, self.level)?)
            }
            CorruptionKind::Masking => {
                let mut m = Matrix::zeros(rows, cols);
                for v in m.as_mut_slice() {
                    *v = if rng.bernoulli(self.level) { 0.0 } else { 1.0 };
                }
                CorruptionDraw::Mask(m)
            }
            CorruptionKind::None => unreachable!(),
        })
    }
}

impl CorruptionDraw {
    pub fn apply(&self, z: &Matrix) -> Result<Matrix> {
        match self {
            CorruptionDraw::Identity => Ok(z.clone()),
            CorruptionDraw::Additive(noise) => z.add(noise),
            CorruptionDraw::Mask(mask) => z.hadamard(mask),
        }
    }

    /// Pulls a gradient back through the corruption with the noise held fixed.
    pub fn backward(&self, grad: Matrix) -> Result<Matrix> {
        match self {
            CorruptionDraw::Identity | CorruptionDraw::Additive(_) => Ok(grad),
            CorruptionDraw::Mask(mask) => grad.hadamard(mask),
        }
    }
}

/// `x_c ~ q(x_c | z)`. Gaussian output is not clipped.
pub fn corrupt(spec: &CorruptionSpec, z: &Matrix, rng: &mut RngState) -> Result<Matrix> {
    spec.draw(z.rows(), z.cols(), rng)?.apply(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegularizerKind {
    None,
    /// Squared Frobenius norm of the weight matrices (biases excluded).
    L2,
    /// Layer-local contraction `‖∂hⁱ/∂hⁱ⁻¹‖²_F`.
    Contractive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub lambda: f64,
}

impl RegularizerSpec {
    pub const fn none() -> Self {
        RegularizerSpec {
            kind: RegularizerKind::None,
            lambda: 0.0,
        }
    }

    pub const fn l2(lambda: f64) -> Self {
        RegularizerSpec {
            kind: RegularizerKind::L2,
            lambda,
        }
    }

    pub const fn contractive(lambda: f64) -> Self {
        RegularizerSpec {
            kind: RegularizerKind::Contractive,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return contract(format!("regularizer coefficient must be >= 0, got {}", self.lambda));
        }
        Ok(())
    }

    pub fn scaled(self, factor: f64) -> Self {
        RegularizerSpec {
            kind: self.kind,
            lambda: self.lambda * factor,
        }
    }
}

/// Value and gradients of the contractive penalty, summed over examples.
#[derive(Clone, Debug)]
pub struct ContractivePenalty {
    pub value: f64,
    pub w_e: Matrix,
    pub b_e: Vec<f64>,
    /// Gradient with respect to the layer input.
    pub input: Matrix,
}

/// `Σ_n Σ_j (h_nj(1-h_nj))² Σ_i W_e[j,i]²` for a logistic encoder.
pub fn contractive_penalty_value_grad(layer: &LayerParams, h_in: &Matrix) -> Result<ContractivePenalty> {
    let hidden = layer.encode_layer(h_in)?;
    contractive_from_hidden(layer, h_in, &hidden)
}

fn contractive_from_hidden(layer: &LayerParams, h_in: &Matrix, hidden: &Matrix) -> Result<ContractivePenalty> {
    if layer.act_e() != Activation::Logistic {
        return Err(Error::Unsupported(
            "closed-form contractive penalty needs a logistic encoder".into(),
        ));
    }
    let w = layer.w_e();
    let (h, _) = w.shape();
    let row_sq: Vec<f64> = w.iter_rows().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut value = 0.0;
    let mut g2_sums = vec![0.0; h];
    let mut d = Matrix::zeros(hidden.rows(), h);
    for n in 0..hidden.rows() {
        let h_row = hidden.row(n);
        let d_row = d.row_mut(n);
        for j in 0..h {
            let y = h_row[j];
            let g = y * (1.0 - y);
            let g2 = g * g;
            value += g2 * row_sq[j];
            g2_sums[j] += g2;
            d_row[j] = 2.0 * g2 * (1.0 - 2.0 * y) * row_sq[j];
        }
    }
    let mut w_grad = d.t_matmul(h_in)?;
    for j in 0..h {
        let s = 2.0 * g2_sums[j];
        for (gw, wv) in w_grad.row_mut(j).iter_mut().zip(w.row(j)) {
            *gw += s * wv;
        }
    }
    Ok(ContractivePenalty {
        value,
        w_e: w_grad,
        b_e: d.column_sums(),
        input: d.matmul(w)?,
    })
}

/// `Σ W²` over the layer's weight matrices and `2W` for each, in
/// [`LayerParams::weights`] order.
pub fn l2_penalty_value_grad(layer: &LayerParams) -> (f64, Vec<Matrix>) {
    let weights = layer.weights();
    let value = weights.iter().map(|w| w.frobenius_sq()).sum();
    (value, weights.iter().map(|w| w.scale(2.0)).collect())
}

/// Stack-wide L2 penalty.
pub fn l2_penalty_stack(stack: &StackParams) -> (f64, Vec<Vec<Matrix>>) {
    let mut total = 0.0;
    let grads = stack
        .layers()
        .iter()
        .map(|l| {
            let (v, g) = l2_penalty_value_grad(l);
            total += v;
            g
        })
        .collect();
    (total, grads)
}

/// Gradient container mirroring [`LayerParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub w_e: Matrix,
    pub b_e: Vec<f64>,
    pub w_d: Option<Matrix>,
    pub b_d: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &LayerParams) -> Self {
        let (h, d) = layer.w_e().shape();
        LayerGrads {
            w_e: Matrix::zeros(h, d),
            b_e: vec![0.0; h],
            w_d: (!layer.is_tied()).then(|| Matrix::zeros(d, h)),
            b_d: vec![0.0; d],
        }
    }

    /// Same order as [`LayerParams::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.w_e.as_slice(), self.b_e.as_slice()];
        if let Some(w) = &self.w_d {
            out.push(w.as_slice());
        }
        out.push(&self.b_d);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackGrads {
    pub layers: Vec<LayerGrads>,
}

impl StackGrads {
    pub fn zeros_like(stack: &StackParams) -> Self {
        StackGrads {
            layers: stack.layers().iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.tensors())
            .flat_map(|t| t.iter().copied())
            .collect()
    }
}

/// Per-layer configuration of the stack objective.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub loss: LossSpec,
    pub corruption: Vec<CorruptionSpec>,
    pub regularizers: Vec<RegularizerSpec>,
}

impl Objective {
    /// Same corruption and regularizer at every one of `depth` layers.
    pub fn uniform(loss: LossSpec, depth: usize, corruption: CorruptionSpec, reg: RegularizerSpec) -> Self {
        Objective {
            loss,
            corruption: vec![corruption; depth],
            regularizers: vec![reg; depth],
        }
    }

    pub fn plain(loss: LossSpec, depth: usize) -> Self {
        Self::uniform(loss, depth, CorruptionSpec::none(), RegularizerSpec::none())
    }

    pub fn depth(&self) -> usize {
        self.corruption.len()
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.corruption.len() != depth || self.regularizers.len() != depth {
            return contract(format!(
                "objective configured for {} corruption / {} regularizer layers, stack has {depth}",
                self.corruption.len(),
                self.regularizers.len()
            ));
        }
        self.corruption.iter().try_for_each(CorruptionSpec::validate)?;
        self.regularizers.iter().try_for_each(RegularizerSpec::validate)
    }

    /// The objective restricted to layer `i` as a one-layer autoencoder.
    pub fn layer(&self, i: usize) -> Objective {
        Objective {
            loss: self.loss,
            corruption: vec![self.corruption[i]],
            regularizers: vec![self.regularizers[i]],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveEval {
    /// Batch-mean reconstruction loss plus weighted penalties.
    pub value: f64,
    /// Batch-mean reconstruction loss alone.
    pub loss: f64,
    /// Unweighted `Rⁱ` per layer (batch-mean for the contractive penalty).
    pub penalties: Vec<f64>,
    pub grads: StackGrads,
}

/// Evaluates the stack objective on `x`, drawing fresh corruption noise.
pub fn stack_objective(
    stack: &StackParams,
    x: &Matrix,
    objective: &Objective,
    rng: &mut RngState,
) -> Result<ObjectiveEval> {
    objective.validate(stack.depth())?;
    let (_, trace) = model::reconstruct(stack, x, Some(&objective.corruption), rng)?;
    backprop(stack, x, &trace, objective)
}

/// As [`stack_objective`] with the corruption noise supplied by the caller.
pub fn stack_objective_with_draws(
    stack: &StackParams,
    x: &Matrix,
    draws: &[CorruptionDraw],
    objective: &Objective,
) -> Result<ObjectiveEval> {
    objective.validate(stack.depth())?;
    let (_, trace) = model::reconstruct_with_draws(stack, x, draws)?;
    backprop(stack, x, &trace, objective)
}

fn backprop(stack: &StackParams, x: &Matrix, trace: &ForwardTrace, objective: &Objective) -> Result<ObjectiveEval> {
    let n = x.rows();
    if n == 0 {
        return contract("objective needs at least one example");
    }
    let inv_n = 1.0 / n as f64;
    let depth = stack.depth();
    let mut grads = StackGrads::zeros_like(stack);
    let x_r = trace.reconstruction();
    let loss = loss_value(objective.loss, x, x_r)? * inv_n;

    // decoders, bottom (x_r) to top
    let mut delta = output_delta(objective.loss, stack.layer(0).act_d(), x, x_r)?.scale(inv_n);
    let mut g_top = None;
    for i in 0..depth {
        let layer = stack.layer(i);
        let input = trace.decoder_input(i);
        let g_w = delta.t_matmul(input)?;
        grads.layers[i].b_d = delta.column_sums();
        let g_input = match layer.untied_w_d() {
            Some(w_d) => {
                grads.layers[i].w_d = Some(g_w);
                delta.matmul(w_d)?
            }
            None => {
                grads.layers[i].w_e.add_assign(&g_w.transpose())?;
                delta.matmul_t(layer.w_e())?
            }
        };
        if i + 1 < depth {
            let act = stack.layer(i + 1).act_d();
            delta = g_input.zip_map(&trace.decode[i + 1], |g, y| g * act.derivative_at_output(y))?;
        } else {
            g_top = Some(g_input);
        }
    }

    // encoders, top to bottom, with each layer's regularizer folded in
    let mut penalties = vec![0.0; depth];
    let mut value = loss;
    let mut g_hidden = g_top.expect("depth >= 1");
    for i in (0..depth).rev() {
        let layer = stack.layer(i);
        let step = &trace.encode[i];
        let act = layer.act_e();
        let delta = g_hidden.zip_map(&step.hidden, |g, y| g * act.derivative_at_output(y))?;
        let lg = &mut grads.layers[i];
        lg.w_e.add_assign(&delta.t_matmul(&step.fed)?)?;
        for (b, d) in lg.b_e.iter_mut().zip(delta.column_sums()) {
            *b += d;
        }
        let mut g_fed = (i > 0).then(|| delta.matmul(layer.w_e())).transpose()?;

        let reg = objective.regularizers[i];
        match reg.kind {
            RegularizerKind::None => {}
            RegularizerKind::Contractive => {
                let p = contractive_from_hidden(layer, &step.fed, &step.hidden)?;
                penalties[i] = p.value * inv_n;
                if reg.lambda != 0.0 {
                    let s = reg.lambda * inv_n;
                    value += reg.lambda * penalties[i];
                    lg.w_e.scaled_add_assign(s, &p.w_e)?;
                    for (b, d) in lg.b_e.iter_mut().zip(&p.b_e) {
                        *b += s * d;
                    }
                    if let Some(g) = g_fed.as_mut() {
                        g.scaled_add_assign(s, &p.input)?;
                    }
                }
            }
            RegularizerKind::L2 => {
                let (v, wg) = l2_penalty_value_grad(layer);
                penalties[i] = v;
                if reg.lambda != 0.0 {
                    value += reg.lambda * v;
                    lg.w_e.scaled_add_assign(reg.lambda, &wg[0])?;
                    if let (Some(gd), Some(g)) = (lg.w_d.as_mut(), wg.get(1)) {
                        gd.scaled_add_assign(reg.lambda, g)?;
                    }
                }
            }
        }
        if let Some(g) = g_fed {
            g_hidden = step.draw.backward(g)?;
        }
    }
    Ok(ObjectiveEval {
        value,
        loss,
        penalties,
        grads,
    })
}

/// Single-layer general autoencoder objective: one fresh corruption draw
/// per example, loss against the clean input plus `λ·R`.
pub fn gae_objective(
    layer: &LayerParams,
    batch: &Matrix,
    loss: LossSpec,
    corruption: CorruptionSpec,
    regularizer: RegularizerSpec,
    rng: &mut RngState,
) -> Result<(f64, LayerGrads)> {
    let stack = StackParams::new(vec![layer.clone()])?;
    let objective = Objective::uniform(loss, 1, corruption, regularizer);
    let eval = stack_objective(&stack, batch, &objective, rng)?;
    let grads = eval.grads.layers.into_iter().next().expect("one layer");
    Ok((eval.value, grads))
}

/// Mean clean reconstruction loss per example.
pub fn reconstruction_error(stack: &StackParams, x: &Matrix, loss: LossSpec) -> Result<f64> {
    if x.rows() == 0 {
        return Ok(0.0);
    }
    let x_r = model::reconstruct_clean(stack, x)?;
    Ok(loss_value(loss, x, &x_r)? / x.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StackParams;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        diff / na.max(nb).max(1e-300)
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
        let mut p = at.to_vec();
        (0..at.len())
            .map(|k| {
                let orig = p[k];
                p[k] = orig + h;
                let up = f(&p);
                p[k] = orig - h;
                let down = f(&p);
                p[k] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn cross_entropy_at_half() {
        let x = Matrix::filled(3, 5, 0.5);
        let (v, _) = loss_value_grad(LossSpec::CrossEntropy, &x, &x).unwrap();
        assert!((v / 3.0 - 5.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn squared_error_perfect_reconstruction() {
        let x = RngState::new(1).uniform_matrix(4, 3, 0.0, 1.0);
        let (v, g) = loss_value_grad(LossSpec::SquaredError, &x, &x).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = RngState::new(2);
        let x = rng.uniform_matrix(4, 6, 0.0, 1.0);
        let x_r = rng.uniform_matrix(4, 6, 0.05, 0.95);
        for spec in [LossSpec::CrossEntropy, LossSpec::SquaredError] {
            let (_, g) = loss_value_grad(spec, &x, &x_r).unwrap();
            let fd = central_diff(
                |p| loss_value(spec, &x, &Matrix::from_vec(4, 6, p.to_vec()).unwrap()).unwrap(),
                x_r.as_slice(),
                1e-6,
            );
            assert!(rel_err(g.as_slice(), &fd) < 1e-7, "{spec:?}");
        }
    }

    #[test]
    fn loss_shape_and_domain_errors() {
        let a = Matrix::zeros(2, 2);
        assert!(loss_value_grad(LossSpec::CrossEntropy, &a, &Matrix::zeros(2, 3)).is_err());
        assert!(loss_value_grad(LossSpec::CrossEntropy, &a.map(|_| 1.5), &a).is_err());
    }

    #[test]
    fn corruption_level_zero_and_masking_one() {
        let mut rng = RngState::new(3);
        let z = rng.uniform_matrix(5, 5, 0.0, 1.0);
        assert_eq!(corrupt(&CorruptionSpec::gaussian(0.0), &z, &mut rng).unwrap(), z);
        assert_eq!(corrupt(&CorruptionSpec::masking(0.0), &z, &mut rng).unwrap(), z);
        assert_eq!(corrupt(&CorruptionSpec::none(), &z, &mut rng).unwrap(), z);
        let masked = corrupt(&CorruptionSpec::masking(1.0), &z, &mut rng).unwrap();
        assert!(masked.as_slice().iter().all(|&v| v == 0.0));
        assert!(corrupt(&CorruptionSpec::masking(1.5), &z, &mut rng).is_err());
        assert!(corrupt(&CorruptionSpec::gaussian(-0.1), &z, &mut rng).is_err());
    }

    #[test]
    fn gaussian_corruption_stddev() {
        let z = Matrix::zeros(1000, 1000);
        let c = corrupt(&CorruptionSpec::gaussian(0.5), &z, &mut RngState::new(4)).unwrap();
        let n = c.as_slice().len() as f64;
        let mean = c.sum() / n;
        let var = c.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.5).abs() < 0.005);
        // not clipped
        assert!(c.as_slice().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn corruption_is_deterministic() {
        let z = RngState::new(5).uniform_matrix(3, 4, 0.0, 1.0);
        for spec in [CorruptionSpec::gaussian(0.3), CorruptionSpec::masking(0.4)] {
            let a = corrupt(&spec, &z, &mut RngState::new(9)).unwrap();
            let b = corrupt(&spec, &z, &mut RngState::new(9)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.shape(), z.shape());
        }
    }

    #[test]
    fn contractive_identity_at_origin() {
        let layer = LayerParams::new(
            Matrix::identity(2),
            vec![0.0; 2],
            None,
            vec![0.0; 2],
            Activation::Logistic,
            Activation::Logistic,
        )
        .unwrap();
        let p = contractive_penalty_value_grad(&layer, &Matrix::zeros(1, 2)).unwrap();
        assert!((p.value - 0.125).abs() < 1e-12);
    }

    #[test]
    fn contractive_zero_weights() {
        let layer = LayerParams::zeros(3, 2, true);
        let x = RngState::new(1).uniform_matrix(4, 3, 0.0, 1.0);
        let p = contractive_penalty_value_grad(&layer, &x).unwrap();
        assert_eq!(p.value, 0.0);
        assert!(p.w_e.as_slice().iter().chain(&p.b_e).all(|&v| v == 0.0));
    }

    #[test]
    fn contractive_rejects_linear_encoder() {
        let layer = LayerParams::zeros(3, 2, true).with_activations(Activation::Linear, Activation::Logistic);
        let err = contractive_penalty_value_grad(&layer, &Matrix::zeros(1, 3)).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn contractive_gradient_matches_finite_differences() {
        let mut rng = RngState::new(6);
        let stack = StackParams::init(5, &[4], false, &mut rng).unwrap();
        let layer = stack.layer(0).clone();
        let x = rng.uniform_matrix(3, 5, 0.0, 1.0);
        let p = contractive_penalty_value_grad(&layer, &x).unwrap();
        let w_fd = central_diff(
            |w| {
                let l = LayerParams::new(
                    Matrix::from_vec(4, 5, w.to_vec()).unwrap(),
                    layer.b_e().to_vec(),
                    layer.untied_w_d().cloned(),
                    layer.b_d().to_vec(),
                    Activation::Logistic,
                    Activation::Logistic,
                )
                .unwrap();
                contractive_penalty_value_grad(&l, &x).unwrap().value
            },
            layer.w_e().as_slice(),
            1e-6,
        );
        assert!(rel_err(p.w_e.as_slice(), &w_fd) < 1e-7);
        let in_fd = central_diff(
            |v| contractive_penalty_value_grad(&layer, &Matrix::from_vec(3, 5, v.to_vec()).unwrap()).unwrap().value,
            x.as_slice(),
            1e-6,
        );
        assert!(rel_err(p.input.as_slice(), &in_fd) < 1e-7);
    }

    #[test]
    fn contractive_invariant_to_hidden_permutation() {
        let mut rng = RngState::new(8);
        let stack = StackParams::init(4, &[3], true, &mut rng).unwrap();
        let layer = stack.layer(0);
        let mut b_e = layer.b_e().to_vec();
        b_e[0] = 0.3;
        b_e[2] = -0.2;
        let layer = LayerParams::new(layer.w_e().clone(), b_e.clone(), None, vec![0.0; 4], Activation::Logistic, Activation::Logistic).unwrap();
        let perm = [2usize, 0, 1];
        let w_p = layer.w_e().select_rows(&perm);
        let b_p: Vec<f64> = perm.iter().map(|&i| b_e[i]).collect();
        let permuted = LayerParams::new(w_p, b_p, None, vec![0.0; 4], Activation::Logistic, Activation::Logistic).unwrap();
        let x = rng.uniform_matrix(5, 4, 0.0, 1.0);
        let a = contractive_penalty_value_grad(&layer, &x).unwrap().value;
        let b = contractive_penalty_value_grad(&permuted, &x).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn l2_hand_values() {
        let layer = LayerParams::new(
            Matrix::from_rows(&[[3.0]]),
            vec![1.0],
            None,
            vec![2.0],
            Activation::Logistic,
            Activation::Logistic,
        )
        .unwrap();
        let (v, g) = l2_penalty_value_grad(&layer);
        assert_eq!(v, 9.0);
        assert_eq!(g[0].as_slice(), &[6.0]);
        assert_eq!(l2_penalty_value_grad(&LayerParams::zeros(3, 2, false)).0, 0.0);
    }

    #[test]
    fn gae_reduces_to_basic_autoencoder() {
        let mut rng = RngState::new(10);
        let stack = StackParams::init(6, &[4], true, &mut rng).unwrap();
        let x = rng.uniform_matrix(7, 6, 0.0, 1.0);
        let (v, _) = gae_objective(
            stack.layer(0),
            &x,
            LossSpec::CrossEntropy,
            CorruptionSpec::none(),
            RegularizerSpec::contractive(0.0),
            &mut rng,
        )
        .unwrap();
        let basic = reconstruction_error(&stack, &x, LossSpec::CrossEntropy).unwrap();
        assert!((v - basic).abs() < 1e-12);
    }
}
