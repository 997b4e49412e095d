//! Deep autoencoder parameters and forward passes.
//!
//! An `N`-layer stack encodes `x = h⁰ → h¹ → … → hᴺ` and decodes back through
//! the mirrored decoders, `hᴺ → h_rᴺ⁻¹ → … → x_r`, for `2N` layers in total.
//! Weight layout follows the row-major, rows-are-examples convention: the
//! encoder weight of a layer is `h × d_in` and a batch is encoded as
//! `s(X·W_eᵀ + b_e)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Error, Result};
use crate::matrix::{logistic, Matrix};
use crate::objectives::{CorruptionDraw, CorruptionSpec};
use crate::rng::RngState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Logistic,
    Linear,
}

impl Activation {
    pub fn apply(self, m: &mut Matrix) {
        if let Activation::Logistic = self {
            for v in m.as_mut_slice() {
                *v = logistic(*v);
            }
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Logistic => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Logistic => 0,
            Activation::Linear => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Logistic),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

/// One encoder/decoder pair `Θⁱ = {W_e, b_e, W_d, b_d}`.
///
/// A tied layer stores no decoder matrix: every read of `W_d` goes through
/// `W_eᵀ`, so there is never a stale copy to keep in sync.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    w_e: Matrix,
    b_e: Vec<f64>,
    w_d: Option<Matrix>,
    b_d: Vec<f64>,
    act_e: Activation,
    act_d: Activation,
}

impl LayerParams {
    pub fn new(
        w_e: Matrix,
        b_e: Vec<f64>,
        w_d: Option<Matrix>,
        b_d: Vec<f64>,
        act_e: Activation,
        act_d: Activation,
    ) -> Result<Self> {
        let (h, d_in) = w_e.shape();
        if b_e.len() != h || b_d.len() != d_in {
            return contract(format!(
                "bias lengths ({}, {}) do not match encoder weight {h}x{d_in}",
                b_e.len(),
                b_d.len()
            ));
        }
        if let Some(w) = &w_d {
            if w.shape() != (d_in, h) {
                return Err(Error::Shape {
                    op: "LayerParams::new (decoder weight)",
                    left: (d_in, h),
                    right: w.shape(),
                });
            }
        }
        Ok(LayerParams {
            w_e,
            b_e,
            w_d,
            b_d,
            act_e,
            act_d,
        })
    }

    /// Uniform `±√(6/(fan_in+fan_out))` weights, zero biases, logistic units.
    pub fn init(d_in: usize, h: usize, tied: bool, rng: &mut RngState) -> Self {
        let bound = libm::sqrt(6.0 / (d_in + h) as f64);
        let w_e = rng.uniform_matrix(h, d_in, -bound, bound);
        let w_d = (!tied).then(|| rng.uniform_matrix(d_in, h, -bound, bound));
        LayerParams {
            w_e,
            b_e: vec![0.0; h],
            w_d,
            b_d: vec![0.0; d_in],
            act_e: Activation::Logistic,
            act_d: Activation::Logistic,
        }
    }

    pub fn zeros(d_in: usize, h: usize, tied: bool) -> Self {
        LayerParams {
            w_e: Matrix::zeros(h, d_in),
            b_e: vec![0.0; h],
            w_d: (!tied).then(|| Matrix::zeros(d_in, h)),
            b_d: vec![0.0; d_in],
            act_e: Activation::Logistic,
            act_d: Activation::Logistic,
        }
    }

    pub fn with_activations(mut self, act_e: Activation, act_d: Activation) -> Self {
        self.act_e = act_e;
        self.act_d = act_d;
        self
    }

    pub fn input_width(&self) -> usize {
        self.w_e.cols()
    }

    pub fn hidden_width(&self) -> usize {
        self.w_e.rows()
    }

    pub fn is_tied(&self) -> bool {
        self.w_d.is_none()
    }

    pub fn act_e(&self) -> Activation {
        self.act_e
    }

    pub fn act_d(&self) -> Activation {
        self.act_d
    }

    pub fn w_e(&self) -> &Matrix {
        &self.w_e
    }

    pub fn b_e(&self) -> &[f64] {
        &self.b_e
    }

    pub fn b_d(&self) -> &[f64] {
        &self.b_d
    }

    /// Decoder weight (`d_in × h`); the live transpose of `W_e` when tied.
    pub fn w_d(&self) -> Matrix {
        match &self.w_d {
            Some(w) => w.clone(),
            None => self.w_e.transpose(),
        }
    }

    /// The separately stored decoder weight, `None` when tied.
    pub fn untied_w_d(&self) -> Option<&Matrix> {
        self.w_d.as_ref()
    }

    /// Parameter tensors in canonical order: `W_e, b_e, [W_d], b_d`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.w_e.as_slice(), self.b_e.as_slice()];
        if let Some(w) = &self.w_d {
            out.push(w.as_slice());
        }
        out.push(&self.b_d);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.w_e.as_mut_slice(), self.b_e.as_mut_slice()];
        if let Some(w) = &mut self.w_d {
            out.push(w.as_mut_slice());
        }
        out.push(&mut self.b_d);
        out
    }

    /// Weight matrices only (the L2 penalty's domain).
    pub fn weights(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.w_e];
        if let Some(w) = &self.w_d {
            out.push(w);
        }
        out
    }

    fn same_architecture(&self, other: &LayerParams) -> bool {
        self.w_e.shape() == other.w_e.shape()
            && self.is_tied() == other.is_tied()
            && self.act_e == other.act_e
            && self.act_d == other.act_d
    }

    pub fn encode_layer(&self, input: &Matrix) -> Result<Matrix> {
        let mut pre = input.matmul_t(&self.w_e)?;
        pre.add_row_broadcast(&self.b_e)?;
        self.act_e.apply(&mut pre);
        Ok(pre)
    }

    pub fn decode_layer(&self, hidden: &Matrix) -> Result<Matrix> {
        let mut pre = match &self.w_d {
            Some(w) => hidden.matmul_t(w)?,
            None => hidden.matmul(&self.w_e)?,
        };
        pre.add_row_broadcast(&self.b_d)?;
        self.act_d.apply(&mut pre);
        Ok(pre)
    }
}

/// The full parameter set `Λ = ∪ᵢ Θⁱ`. Depth is fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct StackParams {
    layers: Vec<LayerParams>,
}

impl StackParams {
    pub fn new(layers: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return contract("a stack needs at least one layer");
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].hidden_width() != pair[1].input_width() {
                return contract(format!(
                    "layer {} outputs width {} but layer {} expects {}",
                    i + 1,
                    pair[0].hidden_width(),
                    i + 2,
                    pair[1].input_width()
                ));
            }
        }
        Ok(StackParams { layers })
    }

    pub fn init(input_width: usize, widths: &[usize], tied: bool, rng: &mut RngState) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d_in = input_width;
        for &h in widths {
            layers.push(LayerParams::init(d_in, h, tied, rng));
            d_in = h;
        }
        Self::new(layers)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &LayerParams {
        &self.layers[i]
    }

    /// Mutable access to parameter values. Shapes cannot change through this.
    pub fn layer_tensors_mut(&mut self, i: usize) -> Vec<&mut [f64]> {
        self.layers[i].tensors_mut()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn top_width(&self) -> usize {
        self.layers[self.layers.len() - 1].hidden_width()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(LayerParams::hidden_width).collect()
    }

    /// Replaces layer `i`, which must keep its architecture.
    pub fn set_layer(&mut self, i: usize, layer: LayerParams) -> Result<()> {
        if !self.layers[i].same_architecture(&layer) {
            return contract(format!("replacement for layer {} changes its architecture", i + 1));
        }
        self.layers[i] = layer;
        Ok(())
    }

    pub fn same_architecture(&self, other: &StackParams) -> bool {
        self.depth() == other.depth()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_architecture(b))
    }

    /// Copies every parameter of `pretrained` into `self`.
    pub fn init_from(&mut self, pretrained: &StackParams) -> Result<()> {
        if !self.same_architecture(pretrained) {
            return contract("pretrained stack has a different architecture");
        }
        self.layers.clone_from(&pretrained.layers);
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.tensors())
            .map(<[f64]>::len)
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            for t in l.tensors() {
                out.extend_from_slice(t);
            }
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return contract(format!(
                "flat vector has {} entries, stack has {} parameters",
                flat.len(),
                self.num_params()
            ));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for t in l.tensors_mut() {
                t.copy_from_slice(&flat[offset..offset + t.len()]);
                offset += t.len();
            }
        }
        Ok(())
    }

    /// A one-layer stack holding a copy of layer `i`.
    pub fn sub_stack(&self, i: usize) -> StackParams {
        StackParams {
            layers: vec![self.layers[i].clone()],
        }
    }

    pub fn into_layers(self) -> Vec<LayerParams> {
        self.layers
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.tensors())
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Per-layer encoder record.
#[derive(Clone, Debug)]
pub struct EncodeStep {
    /// Clean input `hⁱ⁻¹`.
    pub input: Matrix,
    /// The corruption draw applied to `input`.
    pub draw: CorruptionDraw,
    /// Corrupted input `h_cⁱ⁻¹` actually consumed by the layer.
    pub fed: Matrix,
    /// Encoder output `hⁱ`.
    pub hidden: Matrix,
}

/// Everything backpropagation needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub encode: Vec<EncodeStep>,
    /// `decode[i]` is the output of decoder `i`, so `decode[0]` is `x_r`
    /// and `decode[i + 1]` (or `hᴺ` for the top) is its input.
    pub decode: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn top_hidden(&self) -> &Matrix {
        &self.encode[self.encode.len() - 1].hidden
    }

    pub fn reconstruction(&self) -> &Matrix {
        &self.decode[0]
    }

    /// Input fed to decoder `i`.
    pub fn decoder_input(&self, i: usize) -> &Matrix {
        if i + 1 < self.decode.len() {
            &self.decode[i + 1]
        } else {
            self.top_hidden()
        }
    }
}

fn check_width(stack: &StackParams, x: &Matrix) -> Result<()> {
    if x.cols() != stack.input_width() {
        return Err(Error::Shape {
            op: "encode",
            left: (x.rows(), stack.input_width()),
            right: x.shape(),
        });
    }
    Ok(())
}

/// Encodes with per-layer corruption drawn from `rng`. `corruption[i]` is
/// applied to the input of layer `i`; `None` means a clean pass.
pub fn encode(
    stack: &StackParams,
    x: &Matrix,
    corruption: Option<&[CorruptionSpec]>,
    rng: &mut RngState,
) -> Result<Vec<EncodeStep>> {
    check_width(stack, x)?;
    if let Some(c) = corruption {
        if c.len() != stack.depth() {
            return contract(format!(
                "{} corruption specs for a {}-layer stack",
                c.len(),
                stack.depth()
            ));
        }
    }
    let mut steps: Vec<EncodeStep> = Vec::with_capacity(stack.depth());
    for (i, layer) in stack.layers().iter().enumerate() {
        let input = match steps.last() {
            Some(s) => s.hidden.clone(),
            None => x.clone(),
        };
        let draw = match corruption {
            Some(c) => c[i].draw(input.rows(), input.cols(), rng)?,
            None => CorruptionDraw::Identity,
        };
        steps.push(encode_step(layer, input, draw)?);
    }
    Ok(steps)
}

/// Encodes with corruption draws fixed in advance (one per layer).
pub fn encode_with_draws(stack: &StackParams, x: &Matrix, draws: &[CorruptionDraw]) -> Result<Vec<EncodeStep>> {
    check_width(stack, x)?;
    if draws.len() != stack.depth() {
        return contract("need exactly one corruption draw per layer");
    }
    let mut steps: Vec<EncodeStep> = Vec::with_capacity(stack.depth());
    for (layer, draw) in stack.layers().iter().zip(draws) {
        let input = match steps.last() {
            Some(s) => s.hidden.clone(),
            None => x.clone(),
        };
        steps.push(encode_step(layer, input, draw.clone())?);
    }
    Ok(steps)
}

fn encode_step(layer: &LayerParams, input: Matrix, draw: CorruptionDraw) -> Result<EncodeStep> {
    let fed = draw.apply(&input)?;
    let hidden = layer.encode_layer(&fed)?;
    Ok(EncodeStep {
        input,
        draw,
        fed,
        hidden,
    })
}

/// Clean encoding `hᴺ`.
pub fn encode_clean(stack: &StackParams, x: &Matrix) -> Result<Matrix> {
    check_width(stack, x)?;
    let mut h = x.clone();
    for layer in stack.layers() {
        h = layer.encode_layer(&h)?;
    }
    Ok(h)
}

/// All decoder outputs, bottom first (`[x_r, h_r¹, …]`).
pub fn decode_all(stack: &StackParams, h_top: &Matrix) -> Result<Vec<Matrix>> {
    if h_top.cols() != stack.top_width() {
        return Err(Error::Shape {
            op: "decode",
            left: (h_top.rows(), stack.top_width()),
            right: h_top.shape(),
        });
    }
    let n = stack.depth();
    let mut outs: Vec<Matrix> = Vec::with_capacity(n);
    for i in (0..n).rev() {
        let input = outs.last().unwrap_or(h_top);
        let out = stack.layer(i).decode_layer(input)?;
        outs.push(out);
    }
    outs.reverse();
    Ok(outs)
}

/// `x_r = f_d¹ ∘ … ∘ f_dᴺ(h_top)`.
pub fn decode(stack: &StackParams, h_top: &Matrix) -> Result<Matrix> {
    Ok(decode_all(stack, h_top)?.swap_remove(0))
}

pub fn reconstruct(
    stack: &StackParams,
    x: &Matrix,
    corruption: Option<&[CorruptionSpec]>,
    rng: &mut RngState,
) -> Result<(Matrix, ForwardTrace)> {
    let encode = encode(stack, x, corruption, rng)?;
    finish_trace(stack, encode)
}

pub fn reconstruct_with_draws(
    stack: &StackParams,
    x: &Matrix,
    draws: &[CorruptionDraw],
) -> Result<(Matrix, ForwardTrace)> {
    let encode = encode_with_draws(stack, x, draws)?;
    finish_trace(stack, encode)
}

fn finish_trace(stack: &StackParams, encode: Vec<EncodeStep>) -> Result<(Matrix, ForwardTrace)> {
    let decode = decode_all(stack, &encode[encode.len() - 1].hidden)?;
    let x_r = decode[0].clone();
    Ok((x_r, ForwardTrace { encode, decode }))
}

/// Clean reconstruction, no trace.
pub fn reconstruct_clean(stack: &StackParams, x: &Matrix) -> Result<Matrix> {
    decode(stack, &encode_clean(stack, x)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_stack(seed: u64, d: usize, widths: &[usize], tied: bool) -> StackParams {
        let mut rng = RngState::new(seed);
        let mut s = StackParams::init(d, widths, tied, &mut rng).unwrap();
        // non-zero biases so they participate in every check
        let mut flat = s.flatten();
        for v in flat.iter_mut() {
            *v += 0.1 * rng.normal();
        }
        s.unflatten(&flat).unwrap();
        s
    }

    #[test]
    fn zero_weights_encode_to_half() {
        let stack = StackParams::new(vec![LayerParams::zeros(3, 2, true)]).unwrap();
        let x = Matrix::from_rows(&[[0.2, 0.9, 0.4]]);
        let steps = encode(&stack, &x, None, &mut RngState::new(0)).unwrap();
        assert!(steps[0].hidden.as_slice().iter().all(|&v| v == 0.5));
        let x_r = decode(&stack, &steps[0].hidden).unwrap();
        assert!(x_r.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn no_corruption_feeds_clean_inputs() {
        let stack = random_stack(1, 6, &[4, 3], true);
        let x = RngState::new(2).uniform_matrix(5, 6, 0.0, 1.0);
        let steps = encode(&stack, &x, None, &mut RngState::new(0)).unwrap();
        for s in &steps {
            assert_eq!(s.input, s.fed);
        }
        let none = vec![CorruptionSpec::none(); 2];
        let steps2 = encode(&stack, &x, Some(&none), &mut RngState::new(0)).unwrap();
        assert_eq!(steps2[1].fed, steps[1].fed);
        assert_eq!(steps[0].input, x);
    }

    #[test]
    fn two_layer_encode_composes() {
        let stack = random_stack(3, 7, &[5, 4], false);
        let x = RngState::new(4).uniform_matrix(3, 7, 0.0, 1.0);
        let h2 = encode_clean(&stack, &x).unwrap();
        let h1 = encode_clean(&stack.sub_stack(0), &x).unwrap();
        let h2_manual = encode_clean(&stack.sub_stack(1), &h1).unwrap();
        assert_eq!(h2, h2_manual);
    }

    #[test]
    fn three_layer_decode_is_right_to_left() {
        let stack = random_stack(5, 8, &[6, 5, 3], true);
        let h = RngState::new(6).uniform_matrix(4, 3, 0.0, 1.0);
        let mut manual = h.clone();
        for i in (0..3).rev() {
            // explicit W_d = W_eᵀ product instead of the tied fast path
            let w_d = stack.layer(i).w_d();
            let mut pre = Matrix::zeros(manual.rows(), w_d.rows());
            for r in 0..manual.rows() {
                for c in 0..w_d.rows() {
                    let mut s = stack.layer(i).b_d()[c];
                    for k in 0..w_d.cols() {
                        s += manual.get(r, k) * w_d.get(c, k);
                    }
                    pre.set(r, c, logistic(s));
                }
            }
            manual = pre;
        }
        assert!(decode(&stack, &h).unwrap().max_abs_diff(&manual) < 1e-14);
    }

    #[test]
    fn decode_shape_matches_input() {
        let stack = random_stack(7, 9, &[4, 2], false);
        let x = RngState::new(8).uniform_matrix(6, 9, 0.0, 1.0);
        let x_r = reconstruct_clean(&stack, &x).unwrap();
        assert_eq!(x_r.shape(), x.shape());
        assert!(x_r.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let stack = random_stack(9, 5, &[3], true);
        assert!(encode_clean(&stack, &Matrix::zeros(2, 4)).is_err());
        assert!(decode(&stack, &Matrix::zeros(2, 4)).is_err());
        assert!(StackParams::new(vec![LayerParams::zeros(4, 3, true), LayerParams::zeros(2, 2, true)]).is_err());
    }

    #[test]
    fn tied_decoder_tracks_encoder() {
        let mut stack = random_stack(10, 4, &[3], true);
        let before = stack.layer(0).w_d();
        stack.layer_tensors_mut(0)[0][0] += 1.0;
        let after = stack.layer(0).w_d();
        assert_eq!(after.get(0, 0), before.get(0, 0) + 1.0);
        assert_eq!(after, stack.layer(0).w_e().transpose());
        // one weight tensor per tied layer
        assert_eq!(stack.layer(0).weights().len(), 1);
        assert_eq!(stack.layer(0).tensors().len(), 3);
    }

    #[test]
    fn flatten_roundtrip() {
        let mut stack = random_stack(11, 5, &[4, 3], false);
        let flat = stack.flatten();
        assert_eq!(flat.len(), stack.num_params());
        let copy = stack.clone();
        stack.unflatten(&flat).unwrap();
        assert_eq!(stack, copy);
        assert!(stack.unflatten(&flat[1..]).is_err());
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let stack = StackParams::init(30, &[20], false, &mut RngState::new(1)).unwrap();
        let bound = (6.0f64 / 50.0).sqrt();
        let l = stack.layer(0);
        assert!(l.w_e().as_slice().iter().all(|v| v.abs() <= bound));
        assert!(l.untied_w_d().unwrap().as_slice().iter().all(|v| v.abs() <= bound));
        assert!(l.b_e().iter().chain(l.b_d()).all(|&b| b == 0.0));
    }

    #[test]
    fn init_from_copies_and_checks_architecture() {
        let src = random_stack(12, 5, &[4, 3], true);
        let mut dst = random_stack(13, 5, &[4, 3], true);
        dst.init_from(&src).unwrap();
        assert_eq!(dst, src);
        let mut other = random_stack(14, 5, &[4, 2], true);
        assert!(other.init_from(&src).is_err());
    }
}
