//! Training schemes for deep autoencoders.
//!
//! * **layerwise**: each layer is trained as a one-layer autoencoder on the
//!   clean, frozen encodings of the layers below it.
//! * **joint**: the whole `2N`-layer network is trained at once on the
//!   input-space reconstruction loss, with per-layer corruption and
//!   per-layer penalties acting as local regularizers.
//! * **scheduled**: joint training with per-layer, per-iteration multipliers
//!   on the updates (`α`) and on the penalty weights (`λ`).
//! * **U / UJ**: layerwise pretraining followed by joint training without /
//!   with the layer regularizers.
//! * **naive**: every layer's own single-layer objective summed and
//!   optimized simultaneously. Kept as a baseline.
//!
//! All randomness (shuffling, corruption) comes from streams split off
//! `plan.seed`, so `(seed, plan, data)` fixes the result. The layerwise
//! trainer gives layer `i` stream `i` and the joint trainer uses stream 0,
//! which makes the two bit-identical for one-layer stacks.

pub mod grid;
pub mod rmsprop;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{contract, Error, Result};
use crate::matrix::Matrix;
use crate::model::StackParams;
use crate::objectives::{reconstruction_error, stack_objective, Objective, ObjectiveEval, StackGrads};
use crate::rng::RngState;

pub use rmsprop::{RmsPropConfig, RmsPropState};

/// Stream used by the joint phase of the U/UJ schemes.
const FOLLOW_UP_STREAM: u64 = 1 << 32;

/// Wall-clock source for the `seconds` column of training logs.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Clock that always reads zero.
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// Piecewise-constant multipliers over iteration windows of length
/// `window`. Window `k` covers iterations `k·T+1 ..= (k+1)·T`; iterations
/// past the last window keep its values.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub window: usize,
    /// `alphas[k][i]`: step multiplier for layer `i` during window `k`.
    pub alphas: Vec<Vec<f64>>,
    /// `lambdas[k][i]`: multiplier on layer `i`'s penalty weight.
    pub lambdas: Option<Vec<Vec<f64>>>,
}

impl Schedule {
    /// Trains layer `k` alone during window `k`, bottom to top.
    pub fn layerwise_mimic(depth: usize, window: usize) -> Self {
        let alphas = (0..depth)
            .map(|k| (0..depth).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        Schedule {
            window,
            alphas,
            lambdas: None,
        }
    }

    /// All multipliers one.
    pub fn constant(depth: usize, window: usize) -> Self {
        Schedule {
            window,
            alphas: vec![vec![1.0; depth]; depth],
            lambdas: None,
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("malformed schedule: {m}")));
        if self.window == 0 {
            return bad("window length must be positive");
        }
        if self.alphas.len() != depth {
            return bad("need one window per layer");
        }
        let rows = self.alphas.iter().chain(self.lambdas.iter().flatten());
        for row in rows {
            if row.len() != depth {
                return bad("every window needs one multiplier per layer");
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("multipliers must be finite and non-negative");
            }
        }
        if self.lambdas.as_ref().is_some_and(|l| l.len() != self.alphas.len()) {
            return bad("lambda table and alpha table differ in length");
        }
        Ok(())
    }

    fn index(&self, iteration: usize) -> usize {
        ((iteration.max(1) - 1) / self.window).min(self.alphas.len() - 1)
    }

    /// Multipliers in effect at 1-based `iteration`.
    pub fn alpha(&self, iteration: usize) -> &[f64] {
        &self.alphas[self.index(iteration)]
    }

    pub fn lambda(&self, iteration: usize) -> Option<&[f64]> {
        self.lambdas.as_ref().map(|l| l[self.index(iteration)].as_slice())
    }
}

/// How many epochs each layer gets under layerwise training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerwiseBudget {
    /// `epochs` for every layer (so `N·epochs` in total).
    PerLayer,
    /// `epochs` split evenly across layers, lower layers taking the remainder.
    Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EarlyStopping {
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping { patience: 20 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub epochs: usize,
    pub minibatch: usize,
    pub optimizer: RmsPropConfig,
    pub objective: Objective,
    pub schedule: Option<Schedule>,
    /// Stops on validation reconstruction error; the best epoch's
    /// parameters are returned.
    pub early_stopping: Option<EarlyStopping>,
    pub layerwise_budget: LayerwiseBudget,
    pub seed: u64,
}

impl TrainPlan {
    pub fn new(objective: Objective, epochs: usize, learning_rate: f64, seed: u64) -> Self {
        TrainPlan {
            epochs,
            minibatch: 100,
            optimizer: RmsPropConfig::with_learning_rate(learning_rate),
            objective,
            schedule: None,
            early_stopping: None,
            layerwise_budget: LayerwiseBudget::PerLayer,
            seed,
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch must be at least 1".into()));
        }
        self.optimizer.validate()?;
        self.objective.validate(depth)?;
        if let Some(s) = &self.schedule {
            s.validate(depth)?;
        }
        Ok(())
    }

    fn layer_epochs(&self, layer: usize, depth: usize) -> usize {
        match self.layerwise_budget {
            LayerwiseBudget::PerLayer => self.epochs,
            LayerwiseBudget::Split => self.epochs / depth + usize::from(layer < self.epochs % depth),
        }
    }
}

/// Which space the logged reconstruction errors live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorSpace {
    /// Against the original input `x`.
    Input,
    /// Against the input of layer `i` (0-based), i.e. `hⁱ`.
    LayerInput(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean clean reconstruction error per training example.
    pub train_err: f64,
    pub valid_err: Option<f64>,
    pub seconds: f64,
    /// Mean unweighted penalty per layer over the epoch's minibatches.
    pub penalties: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub space: ErrorSpace,
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned, when early stopping was on.
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Layerwise,
    Joint,
    Scheduled,
    /// Layerwise pretraining, then joint training with no regularization.
    PretrainedUnregularized,
    /// Layerwise pretraining, then regularized joint training.
    PretrainedJoint,
    NaiveSum,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Layerwise => "layerwise",
            Scheme::Joint => "joint",
            Scheme::Scheduled => "scheduled",
            Scheme::PretrainedUnregularized => "U",
            Scheme::PretrainedJoint => "UJ",
            Scheme::NaiveSum => "naive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "layerwise" | "L" => Scheme::Layerwise,
            "joint" | "J" => Scheme::Joint,
            "scheduled" => Scheme::Scheduled,
            "U" => Scheme::PretrainedUnregularized,
            "UJ" => Scheme::PretrainedJoint,
            "naive" => Scheme::NaiveSum,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub stack: StackParams,
    /// Layerwise runs produce one log per layer; U/UJ append the joint log.
    pub logs: Vec<TrainLog>,
}

#[derive(Clone, Copy)]
enum Update<'s> {
    Joint,
    Scheduled(&'s Schedule),
    Naive,
}

/// Runs training schemes under one plan.
pub struct Trainer<'a> {
    plan: &'a TrainPlan,
    clock: &'a dyn Clock,
}

impl<'a> Trainer<'a> {
    pub fn new(plan: &'a TrainPlan) -> Self {
        Trainer { plan, clock: &NoClock }
    }

    pub fn with_clock(plan: &'a TrainPlan, clock: &'a dyn Clock) -> Self {
        Trainer { plan, clock }
    }

    fn check(&self, stack: &StackParams, dataset: &Dataset) -> Result<()> {
        self.plan.validate(stack.depth())?;
        if dataset.dim() != stack.input_width() {
            return Err(Error::Shape {
                op: "train",
                left: (dataset.train.len(), stack.input_width()),
                right: dataset.train.x.shape(),
            });
        }
        if dataset.train.is_empty() {
            return contract("training split is empty");
        }
        Ok(())
    }

    pub fn run(&self, scheme: Scheme, stack: StackParams, dataset: &Dataset) -> Result<TrainOutcome> {
        match scheme {
            Scheme::Layerwise => {
                let (stack, logs) = self.layerwise(stack, dataset)?;
                Ok(TrainOutcome { stack, logs })
            }
            Scheme::Joint => self.joint(stack, dataset).map(single),
            Scheme::Scheduled => self.scheduled(stack, dataset).map(single),
            Scheme::PretrainedUnregularized => self.pretrained(stack, dataset, false),
            Scheme::PretrainedJoint => self.pretrained(stack, dataset, true),
            Scheme::NaiveSum => self.naive(stack, dataset).map(single),
        }
    }

    pub fn layerwise(&self, mut stack: StackParams, dataset: &Dataset) -> Result<(StackParams, Vec<TrainLog>)> {
        self.check(&stack, dataset)?;
        let master = RngState::new(self.plan.seed);
        let depth = stack.depth();
        let mut train = dataset.train.x.clone();
        let mut valid = dataset.valid.x.clone();
        let mut logs = Vec::with_capacity(depth);
        for i in 0..depth {
            let mut sub = stack.sub_stack(i);
            let mut rng = master.split(i as u64);
            let log = self.fit(
                &mut sub,
                &train,
                &valid,
                &self.plan.objective.layer(i),
                self.plan.layer_epochs(i, depth),
                &mut rng,
                Update::Joint,
                ErrorSpace::LayerInput(i),
            )?;
            logs.push(log);
            let trained = sub.into_layers().swap_remove(0);
            if i + 1 < depth {
                train = trained.encode_layer(&train)?;
                valid = trained.encode_layer(&valid)?;
            }
            stack.set_layer(i, trained)?;
        }
        Ok((stack, logs))
    }

    pub fn joint(&self, mut stack: StackParams, dataset: &Dataset) -> Result<(StackParams, TrainLog)> {
        self.check(&stack, dataset)?;
        let mut rng = RngState::new(self.plan.seed).split(0);
        let log = self.fit(
            &mut stack,
            &dataset.train.x,
            &dataset.valid.x,
            &self.plan.objective,
            self.plan.epochs,
            &mut rng,
            Update::Joint,
            ErrorSpace::Input,
        )?;
        Ok((stack, log))
    }

    pub fn scheduled(&self, mut stack: StackParams, dataset: &Dataset) -> Result<(StackParams, TrainLog)> {
        self.check(&stack, dataset)?;
        let schedule = self
            .plan
            .schedule
            .as_ref()
            .ok_or_else(|| Error::Config("scheduled training needs a schedule".into()))?;
        let mut rng = RngState::new(self.plan.seed).split(0);
        let log = self.fit(
            &mut stack,
            &dataset.train.x,
            &dataset.valid.x,
            &self.plan.objective,
            self.plan.epochs,
            &mut rng,
            Update::Scheduled(schedule),
            ErrorSpace::Input,
        )?;
        Ok((stack, log))
    }

    /// Layerwise pretraining, then joint training from the pretrained
    /// weights, with (`regularized`) or without the layer regularizers.
    pub fn pretrained(&self, stack: StackParams, dataset: &Dataset, regularized: bool) -> Result<TrainOutcome> {
        let (pretrained, mut logs) = self.layerwise(stack.clone(), dataset)?;
        let mut init = stack;
        init_from(&mut init, &pretrained)?;
        let objective = if regularized {
            self.plan.objective.clone()
        } else {
            Objective::plain(self.plan.objective.loss, init.depth())
        };
        let mut rng = RngState::new(self.plan.seed).split(FOLLOW_UP_STREAM);
        let log = self.fit(
            &mut init,
            &dataset.train.x,
            &dataset.valid.x,
            &objective,
            self.plan.epochs,
            &mut rng,
            Update::Joint,
            ErrorSpace::Input,
        )?;
        logs.push(log);
        Ok(TrainOutcome { stack: init, logs })
    }

    pub fn naive(&self, mut stack: StackParams, dataset: &Dataset) -> Result<(StackParams, TrainLog)> {
        self.check(&stack, dataset)?;
        let mut rng = RngState::new(self.plan.seed).split(0);
        let log = self.fit(
            &mut stack,
            &dataset.train.x,
            &dataset.valid.x,
            &self.plan.objective,
            self.plan.epochs,
            &mut rng,
            Update::Naive,
            ErrorSpace::Input,
        )?;
        Ok((stack, log))
    }

    #[allow(clippy::too_many_arguments)]
    fn fit(
        &self,
        stack: &mut StackParams,
        train: &Matrix,
        valid: &Matrix,
        objective: &Objective,
        epochs: usize,
        rng: &mut RngState,
        update: Update<'_>,
        space: ErrorSpace,
    ) -> Result<TrainLog> {
        let plan = self.plan;
        let depth = stack.depth();
        let n = train.rows();
        let start = self.clock.seconds();
        let mut opt = RmsPropState::new(plan.optimizer, stack);
        let mut iteration = 0usize;
        let mut records = Vec::with_capacity(epochs);
        let stopping = plan.early_stopping.filter(|_| valid.rows() > 0);
        let mut best: Option<(f64, usize, StackParams)> = None;
        let mut since_best = 0usize;

        for epoch in 1..=epochs {
            let order = rng.permutation(n);
            let mut penalty_sums = vec![0.0; depth];
            let mut batches = 0usize;
            for chunk in order.chunks(plan.minibatch) {
                iteration += 1;
                let batch = train.select_rows(chunk);
                let (eval, multipliers) = match update {
                    Update::Joint => (stack_objective(stack, &batch, objective, rng)?, None),
                    Update::Scheduled(s) => {
                        let obj = match s.lambda(iteration) {
                            Some(scale) => scaled_objective(objective, scale),
                            None => objective.clone(),
                        };
                        (stack_objective(stack, &batch, &obj, rng)?, Some(s.alpha(iteration)))
                    }
                    Update::Naive => (naive_objective(stack, &batch, objective, rng)?, None),
                };
                opt.step(stack, &eval.grads, multipliers)?;
                for (s, p) in penalty_sums.iter_mut().zip(&eval.penalties) {
                    *s += p;
                }
                batches += 1;
            }
            if !stack.all_finite() {
                return contract(format!("parameters became non-finite in epoch {epoch}"));
            }
            let train_err = reconstruction_error(stack, train, objective.loss)?;
            let valid_err = (valid.rows() > 0)
                .then(|| reconstruction_error(stack, valid, objective.loss))
                .transpose()?;
            records.push(EpochRecord {
                epoch,
                train_err,
                valid_err,
                seconds: self.clock.seconds() - start,
                penalties: penalty_sums.iter().map(|s| s / batches.max(1) as f64).collect(),
            });
            if let (Some(stop), Some(v)) = (stopping, valid_err) {
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, epoch, stack.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= stop.patience {
                        break;
                    }
                }
            }
        }
        let best_epoch = match best {
            Some((_, epoch, params)) => {
                *stack = params;
                Some(epoch)
            }
            None => None,
        };
        Ok(TrainLog {
            space,
            records,
            best_epoch,
        })
    }
}

fn single((stack, log): (StackParams, TrainLog)) -> TrainOutcome {
    TrainOutcome {
        stack,
        logs: vec![log],
    }
}

fn scaled_objective(objective: &Objective, scale: &[f64]) -> Objective {
    let mut o = objective.clone();
    for (r, &s) in o.regularizers.iter_mut().zip(scale) {
        *r = r.scaled(s);
    }
    o
}

/// `Σᵢ J_GAE(Θⁱ)` with each layer's input taken as a constant.
fn naive_objective(stack: &StackParams, batch: &Matrix, objective: &Objective, rng: &mut RngState) -> Result<ObjectiveEval> {
    let mut grads = StackGrads::zeros_like(stack);
    let mut penalties = Vec::with_capacity(stack.depth());
    let (mut value, mut loss) = (0.0, 0.0);
    let mut input = batch.clone();
    for i in 0..stack.depth() {
        let sub = stack.sub_stack(i);
        let eval = stack_objective(&sub, &input, &objective.layer(i), rng)?;
        value += eval.value;
        loss += eval.loss;
        penalties.push(eval.penalties[0]);
        grads.layers[i] = eval.grads.layers.into_iter().next().expect("one layer");
        if i + 1 < stack.depth() {
            input = stack.layer(i).encode_layer(&input)?;
        }
    }
    Ok(ObjectiveEval {
        value,
        loss,
        penalties,
        grads,
    })
}

/// Copies pretrained parameters into `stack` (architectures must match).
pub fn init_from(stack: &mut StackParams, pretrained: &StackParams) -> Result<()> {
    stack.init_from(pretrained)
}

pub fn train_layerwise(stack: StackParams, dataset: &Dataset, plan: &TrainPlan) -> Result<(StackParams, Vec<TrainLog>)> {
    Trainer::new(plan).layerwise(stack, dataset)
}

pub fn train_joint(stack: StackParams, dataset: &Dataset, plan: &TrainPlan) -> Result<(StackParams, TrainLog)> {
    Trainer::new(plan).joint(stack, dataset)
}

pub fn train_scheduled(stack: StackParams, dataset: &Dataset, plan: &TrainPlan) -> Result<(StackParams, TrainLog)> {
    Trainer::new(plan).scheduled(stack, dataset)
}
