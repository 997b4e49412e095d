//! Discriminative evaluation: a linear SVM probe on frozen top-layer
//! features and supervised finetuning of the encoder as a softmax MLP.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{contract, Error, Result};
use crate::matrix::{dot, Matrix};
use crate::model::{encode_clean, StackParams};
use crate::objectives::StackGrads;
use crate::rng::RngState;
use crate::train::{EarlyStopping, RmsPropConfig, RmsPropState};

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Top-layer code `h^N` of a clean pass.
pub fn extract_features(stack: &StackParams, x: &Matrix) -> Result<Matrix> {
    encode_clean(stack, x)
}

/// Anything that maps input rows to class indices.
pub trait Classifier {
    fn predict(&self, x: &Matrix) -> Result<Vec<usize>>;
}

/// Index of the largest score; ties go to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    /// Percent.
    pub error: f64,
    /// 95% normal-approximation half-width, percent.
    pub ci: f64,
    pub mistakes: usize,
    pub n: usize,
}

impl EvalReport {
    pub fn from_counts(mistakes: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return contract("cannot evaluate on an empty test set");
        }
        let p = mistakes as f64 / n as f64;
        Ok(EvalReport {
            error: 100.0 * p,
            ci: 100.0 * 1.96 * libm::sqrt(p * (1.0 - p) / n as f64),
            mistakes,
            n,
        })
    }
}

pub fn error_report(predicted: &[usize], labels: &[usize]) -> Result<EvalReport> {
    if predicted.len() != labels.len() {
        return contract("prediction and label counts differ");
    }
    let mistakes = predicted.iter().zip(labels).filter(|(p, y)| p != y).count();
    EvalReport::from_counts(mistakes, labels.len())
}

pub fn evaluate(classifier: &dyn Classifier, x: &Matrix, labels: &[usize]) -> Result<EvalReport> {
    if x.rows() == 0 {
        return contract("cannot evaluate on an empty test set");
    }
    error_report(&classifier.predict(x)?, labels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub c_grid: Vec<f64>,
    /// Passes over the training rows per binary problem.
    pub epochs: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            c_grid: DEFAULT_C_GRID.to_vec(),
            epochs: 100,
        }
    }
}

/// One-vs-rest linear classifier `argmax_k (W x + b)_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub c: f64,
    /// Which representation the probe was trained on.
    pub feature_tag: String,
}

impl LinearProbe {
    pub fn scores(&self, features: &Matrix) -> Result<Matrix> {
        let mut s = features.matmul_t(&self.w)?;
        s.add_row_broadcast(&self.b)?;
        Ok(s)
    }
}

impl Classifier for LinearProbe {
    fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(self.scores(features)?.iter_rows().map(argmax).collect())
    }
}

/// Minimizes `(λ/2)‖(w,b)‖² + mean_n max(0, 1 − y_n(w·x_n + b))` with
/// `λ = 1/(C·n)` by Pegasos steps in a fixed cyclic order, returning the
/// average of the iterates over the second half of training. The bias is
/// an extra weight on a constant feature.
pub fn train_binary_hinge(x: &Matrix, y: &[f64], c: f64, epochs: usize) -> (Vec<f64>, f64) {
    let (n, d) = x.shape();
    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / libm::sqrt(lambda);
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut averaged = 0usize;
    let total = epochs * n;
    let mut t = 0usize;
    for _ in 0..epochs {
        for i in 0..n {
            t += 1;
            let row = x.row(i);
            let margin = y[i] * (dot(&w[..d], row) + w[d]);
            let eta = 1.0 / (lambda * t as f64);
            let shrink = 1.0 - eta * lambda;
            for v in &mut w {
                *v *= shrink;
            }
            if margin < 1.0 {
                for (v, &f) in w[..d].iter_mut().zip(row) {
                    *v += eta * y[i] * f;
                }
                w[d] += eta * y[i];
            }
            let norm = libm::sqrt(w.iter().map(|v| v * v).sum::<f64>());
            if norm > radius {
                let s = radius / norm;
                for v in &mut w {
                    *v *= s;
                }
            }
            if 2 * t > total {
                averaged += 1;
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += (v - *a) / averaged as f64;
                }
            }
        }
    }
    let b = avg[d];
    avg.truncate(d);
    (avg, b)
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return contract(format!("{} labels for {rows} rows", labels.len()));
    }
    if let Some(y) = labels.iter().find(|&&y| y >= classes) {
        return contract(format!("label {y} outside 0..{classes}"));
    }
    Ok(())
}

/// Trains a probe for one value of `C`.
pub fn train_probe_with_c(features: &Matrix, labels: &[usize], classes: usize, c: f64, epochs: usize) -> Result<LinearProbe> {
    check_labels(labels, features.rows(), classes)?;
    let distinct = labels.iter().fold(vec![false; classes], |mut seen, &y| {
        seen[y] = true;
        seen
    });
    if distinct.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::Config("linear probe needs at least two classes in the training data".into()));
    }
    if !(c > 0.0 && c.is_finite()) || epochs == 0 {
        return Err(Error::Config(format!("invalid probe setting C={c}, epochs={epochs}")));
    }
    let h = features.cols();
    let mut w = Matrix::zeros(classes, h);
    let mut b = vec![0.0; classes];
    for k in 0..classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let (wk, bk) = train_binary_hinge(features, &y, c, epochs);
        w.row_mut(k).copy_from_slice(&wk);
        b[k] = bk;
    }
    Ok(LinearProbe {
        w,
        b,
        c,
        feature_tag: String::new(),
    })
}

/// Trains one probe per `C` and keeps the one with the lowest validation
/// error (earliest in the grid on ties).
pub fn train_linear_probe(
    features: &Matrix,
    labels: &[usize],
    classes: usize,
    config: &ProbeConfig,
    validation: (&Matrix, &[usize]),
) -> Result<LinearProbe> {
    if config.c_grid.is_empty() {
        return Err(Error::Config("empty C grid".into()));
    }
    let (vx, vy) = validation;
    if vx.rows() == 0 && config.c_grid.len() > 1 {
        return Err(Error::Config("selecting C needs validation data".into()));
    }
    let mut best: Option<(usize, LinearProbe)> = None;
    for &c in &config.c_grid {
        let probe = train_probe_with_c(features, labels, classes, c, config.epochs)?;
        if vx.rows() == 0 {
            return Ok(probe);
        }
        let mistakes = error_report(&probe.predict(vx)?, vy)?.mistakes;
        if best.as_ref().is_none_or(|(m, _)| mistakes < *m) {
            best = Some((mistakes, probe));
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

/// Encoder stack followed by a softmax layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneNet {
    /// Only the encoder half is used.
    pub stack: StackParams,
    /// `classes × top_width`.
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneGrads {
    pub stack: StackGrads,
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

impl FinetuneGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.stack.flatten();
        v.extend_from_slice(self.out_w.as_slice());
        v.extend_from_slice(&self.out_b);
        v
    }
}

impl FinetuneNet {
    /// Output weights uniform in `±√(6/(h+classes))`, zero biases.
    pub fn new(stack: StackParams, classes: usize, rng: &mut RngState) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config("finetuning needs at least two classes".into()));
        }
        let h = stack.top_width();
        let r = libm::sqrt(6.0 / (h + classes) as f64);
        Ok(FinetuneNet {
            out_w: rng.uniform_matrix(classes, h, -r, r),
            out_b: vec![0.0; classes],
            stack,
        })
    }

    pub fn classes(&self) -> usize {
        self.out_b.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.stack.flatten();
        v.extend_from_slice(self.out_w.as_slice());
        v.extend_from_slice(&self.out_b);
        v
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.stack.num_params();
        let nw = self.out_w.as_slice().len();
        if flat.len() != n + nw + self.out_b.len() {
            return contract("flat parameter vector has the wrong length");
        }
        self.stack.unflatten(&flat[..n])?;
        self.out_w.as_mut_slice().copy_from_slice(&flat[n..n + nw]);
        self.out_b.copy_from_slice(&flat[n + nw..]);
        Ok(())
    }

    /// Row-wise class probabilities.
    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        let h = encode_clean(&self.stack, x)?;
        Ok(softmax_rows(self.logits(&h)?))
    }

    fn logits(&self, h: &Matrix) -> Result<Matrix> {
        let mut z = h.matmul_t(&self.out_w)?;
        z.add_row_broadcast(&self.out_b)?;
        Ok(z)
    }

    /// Mean softmax cross-entropy and its gradient.
    pub fn loss_and_grads(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, FinetuneGrads)> {
        check_labels(labels, x.rows(), self.classes())?;
        let n = x.rows().max(1) as f64;
        let mut acts = vec![x.clone()];
        for layer in self.stack.layers() {
            let next = layer.encode_layer(acts.last().expect("nonempty"))?;
            acts.push(next);
        }
        let top = acts.last().expect("nonempty");
        let p = softmax_rows(self.logits(top)?);
        let mut loss = 0.0;
        let mut delta = p;
        for (r, &y) in labels.iter().enumerate() {
            loss -= libm::log(delta.get(r, y).max(f64::MIN_POSITIVE));
            let v = delta.get(r, y);
            delta.set(r, y, v - 1.0);
        }
        let delta = delta.scale(1.0 / n);
        let out_w = delta.t_matmul(top)?;
        let out_b = delta.column_sums();
        let mut dh = delta.matmul(&self.out_w)?;
        let mut stack = StackGrads::zeros_like(&self.stack);
        for (i, layer) in self.stack.layers().iter().enumerate().rev() {
            let act = layer.act_e();
            let dz = dh.zip_map(&acts[i + 1], |g, y| g * act.derivative_at_output(y))?;
            stack.layers[i].w_e = dz.t_matmul(&acts[i])?;
            stack.layers[i].b_e = dz.column_sums();
            if i > 0 {
                dh = dz.matmul(layer.w_e())?;
            }
        }
        Ok((loss / n, FinetuneGrads { stack, out_w, out_b }))
    }
}

impl Classifier for FinetuneNet {
    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let h = encode_clean(&self.stack, x)?;
        Ok(self.logits(&h)?.iter_rows().map(argmax).collect())
    }
}

fn softmax_rows(mut z: Matrix) -> Matrix {
    for r in 0..z.rows() {
        let row = z.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    z
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetunePlan {
    pub epochs: usize,
    pub minibatch: usize,
    pub optimizer: RmsPropConfig,
    /// Patience on validation classification error.
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
}

impl FinetunePlan {
    pub fn new(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        FinetunePlan {
            epochs,
            minibatch: 100,
            optimizer: RmsPropConfig::with_learning_rate(learning_rate),
            early_stopping: Some(EarlyStopping::default()),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    /// Percent; `None` without validation data.
    pub valid_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub net: FinetuneNet,
    /// On the test split.
    pub report: EvalReport,
    pub history: Vec<FinetuneEpoch>,
    pub best_epoch: Option<usize>,
}

/// Trains every encoder and output parameter with rms-prop on the labeled
/// training split, keeping the weights of the best validation epoch.
pub fn finetune(mut net: FinetuneNet, dataset: &Dataset, plan: &FinetunePlan) -> Result<FinetuneOutcome> {
    if plan.minibatch == 0 {
        return Err(Error::Config("minibatch must be at least 1".into()));
    }
    plan.optimizer.validate()?;
    let train_y = dataset.train.labels()?;
    let valid_y = if dataset.valid.is_empty() { &[][..] } else { dataset.valid.labels()? };
    let mut rng = RngState::new(plan.seed);
    let mut opt = RmsPropState::new(plan.optimizer, &net.stack);
    let mut r_w = vec![0.0; net.out_w.as_slice().len()];
    let mut r_b = vec![0.0; net.out_b.len()];
    let mut history = Vec::new();
    let mut best: Option<(usize, usize, FinetuneNet)> = None;
    let mut since_best = 0usize;
    let n = dataset.train.len();

    for epoch in 1..=plan.epochs {
        let order = rng.permutation(n);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(plan.minibatch) {
            let xb = dataset.train.x.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let (loss, g) = net.loss_and_grads(&xb, &yb)?;
            loss_sum += loss * chunk.len() as f64;
            opt.step(&mut net.stack, &g.stack, None)?;
            RmsPropState::step_tensor(&plan.optimizer, &mut r_w, net.out_w.as_mut_slice(), g.out_w.as_slice(), 1.0)?;
            RmsPropState::step_tensor(&plan.optimizer, &mut r_b, &mut net.out_b, &g.out_b, 1.0)?;
        }
        if !net.stack.all_finite() || !net.out_w.is_finite() {
            return contract(format!("finetuning diverged in epoch {epoch}"));
        }
        let valid = if valid_y.is_empty() {
            None
        } else {
            Some(error_report(&net.predict(&dataset.valid.x)?, valid_y)?)
        };
        history.push(FinetuneEpoch {
            epoch,
            train_loss: loss_sum / n.max(1) as f64,
            valid_error: valid.map(|r| r.error),
        });
        if let (Some(stop), Some(v)) = (plan.early_stopping, valid) {
            if best.as_ref().is_none_or(|b| v.mistakes < b.0) {
                best = Some((v.mistakes, epoch, net.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= stop.patience {
                    break;
                }
            }
        }
    }
    let best_epoch = best.map(|(_, epoch, params)| {
        net = params;
        epoch
    });
    let test_y = dataset.test.labels()?;
    let report = evaluate(&net, &dataset.test.x, test_y)?;
    Ok(FinetuneOutcome {
        net,
        report,
        history,
        best_epoch,
    })
}
