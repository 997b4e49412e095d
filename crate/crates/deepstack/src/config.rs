//! `key = value` run configuration with a strict schema.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors, reported with the file name and line. List values are comma
//! separated; a per-layer list of length one applies to every layer.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use deepstack_core::classifier::DEFAULT_C_GRID;
use deepstack_core::generative::{default_sigma_grid, DEFAULT_BURN_IN};
use deepstack_core::objectives::{CorruptionKind, RegularizerKind};
use deepstack_core::train::grid::{Grid, STANDARD_LEARNING_RATES, STANDARD_NOISE_LEVELS};
use deepstack_core::train::{EarlyStopping, LayerwiseBudget, RmsPropConfig, Schedule, Scheme, TrainPlan};
use deepstack_core::{CorruptionSpec, LossSpec, Objective, RegularizerSpec};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    /// One layer at a time, bottom to top.
    Mimic,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub scheme: Scheme,
    pub depth: usize,
    pub widths: Vec<usize>,
    pub tied: bool,
    pub loss: LossSpec,
    pub corruption: CorruptionKind,
    pub noise: Vec<f64>,
    pub regularizer: RegularizerKind,
    pub lambda: Vec<f64>,
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub seed: u64,
    pub budget: LayerwiseBudget,
    /// 0 disables early stopping.
    pub patience: usize,
    pub schedule: ScheduleKind,
    /// Iterations per schedule window; 0 means `epochs·batches / depth`.
    pub schedule_window: usize,
    pub n_train: Option<usize>,
    pub n_valid: Option<usize>,
    pub pixel_noise: f64,
    pub synth_n: usize,
    pub synth_side: usize,
    pub data_seed: u64,
    pub samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub sigma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub probe_epochs: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_patience: usize,
    pub grid_learning_rates: Vec<f64>,
    pub grid_noise: Vec<f64>,
    pub grid_contraction: Vec<f64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "synth-bars".into(),
            scheme: Scheme::Joint,
            depth: 2,
            widths: vec![1000],
            tied: true,
            loss: LossSpec::CrossEntropy,
            corruption: CorruptionKind::Masking,
            noise: vec![0.3],
            regularizer: RegularizerKind::None,
            lambda: vec![0.0],
            learning_rate: 0.01,
            decay: 0.9,
            epsilon: 1e-8,
            epochs: 300,
            minibatch: 100,
            seed: 0,
            budget: LayerwiseBudget::PerLayer,
            patience: 0,
            schedule: ScheduleKind::Mimic,
            schedule_window: 0,
            n_train: None,
            n_valid: None,
            pixel_noise: 0.0,
            synth_n: 2000,
            synth_side: 8,
            data_seed: 1,
            samples: 10_000,
            burn_in: DEFAULT_BURN_IN,
            thinning: 1,
            sigma_grid: default_sigma_grid(),
            c_grid: DEFAULT_C_GRID.to_vec(),
            probe_epochs: 100,
            finetune_epochs: 1000,
            finetune_lr: 0.001,
            finetune_patience: 20,
            grid_learning_rates: STANDARD_LEARNING_RATES.to_vec(),
            grid_noise: STANDARD_NOISE_LEVELS.to_vec(),
            grid_contraction: Vec::new(),
            out: PathBuf::from("runs"),
        }
    }
}

pub const KEYS: [&str; 39] = [
    "dataset",
    "scheme",
    "depth",
    "widths",
    "tied",
    "loss",
    "corruption",
    "noise",
    "regularizer",
    "lambda",
    "learning_rate",
    "decay",
    "epsilon",
    "epochs",
    "minibatch",
    "seed",
    "budget",
    "patience",
    "schedule",
    "schedule_window",
    "n_train",
    "n_valid",
    "pixel_noise",
    "synth_n",
    "synth_side",
    "data_seed",
    "samples",
    "burn_in",
    "thinning",
    "sigma_grid",
    "c_grid",
    "probe_epochs",
    "finetune_epochs",
    "finetune_lr",
    "finetune_patience",
    "grid_learning_rates",
    "grid_noise",
    "grid_contraction",
    "out",
];

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| scalar(p.trim())).collect()
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn optional(v: &str) -> std::result::Result<Option<usize>, String> {
    if v == "all" {
        Ok(None)
    } else {
        scalar(v).map(Some)
    }
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, found '{v}'")),
    }
}

fn loss_name(l: LossSpec) -> &'static str {
    match l {
        LossSpec::CrossEntropy => "cross-entropy",
        LossSpec::SquaredError => "squared",
    }
}

fn corruption_name(c: CorruptionKind) -> &'static str {
    match c {
        CorruptionKind::None => "none",
        CorruptionKind::Gaussian => "gaussian",
        CorruptionKind::Masking => "masking",
    }
}

fn regularizer_name(r: RegularizerKind) -> &'static str {
    match r {
        RegularizerKind::None => "none",
        RegularizerKind::L2 => "l2",
        RegularizerKind::Contractive => "contractive",
    }
}

impl RunConfig {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "dataset" => self.dataset = v.to_string(),
            "scheme" => self.scheme = Scheme::parse(v).ok_or(format!("unknown scheme '{v}' (layerwise, joint, scheduled, U, UJ, naive)"))?,
            "depth" => self.depth = scalar(v)?,
            "widths" => self.widths = list(v)?,
            "tied" => self.tied = flag(v)?,
            "loss" => {
                self.loss = match v {
                    "cross-entropy" | "ce" => LossSpec::CrossEntropy,
                    "squared" | "se" => LossSpec::SquaredError,
                    _ => return Err(format!("unknown loss '{v}' (cross-entropy, squared)")),
                }
            }
            "corruption" => {
                self.corruption = match v {
                    "none" => CorruptionKind::None,
                    "gaussian" => CorruptionKind::Gaussian,
                    "masking" => CorruptionKind::Masking,
                    _ => return Err(format!("unknown corruption '{v}' (none, gaussian, masking)")),
                }
            }
            "noise" => self.noise = list(v)?,
            "regularizer" => {
                self.regularizer = match v {
                    "none" => RegularizerKind::None,
                    "l2" => RegularizerKind::L2,
                    "contractive" => RegularizerKind::Contractive,
                    _ => return Err(format!("unknown regularizer '{v}' (none, l2, contractive)")),
                }
            }
            "lambda" => self.lambda = list(v)?,
            "learning_rate" => self.learning_rate = scalar(v)?,
            "decay" => self.decay = scalar(v)?,
            "epsilon" => self.epsilon = scalar(v)?,
            "epochs" => self.epochs = scalar(v)?,
            "minibatch" => self.minibatch = scalar(v)?,
            "seed" => self.seed = scalar(v)?,
            "budget" => {
                self.budget = match v {
                    "per-layer" => LayerwiseBudget::PerLayer,
                    "split" => LayerwiseBudget::Split,
                    _ => return Err(format!("unknown budget '{v}' (per-layer, split)")),
                }
            }
            "patience" => self.patience = scalar(v)?,
            "schedule" => {
                self.schedule = match v {
                    "mimic" => ScheduleKind::Mimic,
                    "constant" => ScheduleKind::Constant,
                    _ => return Err(format!("unknown schedule '{v}' (mimic, constant)")),
                }
            }
            "schedule_window" => self.schedule_window = scalar(v)?,
            "n_train" => self.n_train = optional(v)?,
            "n_valid" => self.n_valid = optional(v)?,
            "pixel_noise" => self.pixel_noise = scalar(v)?,
            "synth_n" => self.synth_n = scalar(v)?,
            "synth_side" => self.synth_side = scalar(v)?,
            "data_seed" => self.data_seed = scalar(v)?,
            "samples" => self.samples = scalar(v)?,
            "burn_in" => self.burn_in = scalar(v)?,
            "thinning" => self.thinning = scalar(v)?,
            "sigma_grid" => self.sigma_grid = list(v)?,
            "c_grid" => self.c_grid = list(v)?,
            "probe_epochs" => self.probe_epochs = scalar(v)?,
            "finetune_epochs" => self.finetune_epochs = scalar(v)?,
            "finetune_lr" => self.finetune_lr = scalar(v)?,
            "finetune_patience" => self.finetune_patience = scalar(v)?,
            "grid_learning_rates" => self.grid_learning_rates = list(v)?,
            "grid_noise" => self.grid_noise = list(v)?,
            "grid_contraction" => self.grid_contraction = list(v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let opt = |o: Option<usize>| o.map_or("all".to_string(), |n| n.to_string());
        match key {
            "dataset" => self.dataset.clone(),
            "scheme" => self.scheme.name().into(),
            "depth" => self.depth.to_string(),
            "widths" => join(&self.widths),
            "tied" => self.tied.to_string(),
            "loss" => loss_name(self.loss).into(),
            "corruption" => corruption_name(self.corruption).into(),
            "noise" => join(&self.noise),
            "regularizer" => regularizer_name(self.regularizer).into(),
            "lambda" => join(&self.lambda),
            "learning_rate" => self.learning_rate.to_string(),
            "decay" => self.decay.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "epochs" => self.epochs.to_string(),
            "minibatch" => self.minibatch.to_string(),
            "seed" => self.seed.to_string(),
            "budget" => match self.budget {
                LayerwiseBudget::PerLayer => "per-layer".into(),
                LayerwiseBudget::Split => "split".into(),
            },
            "patience" => self.patience.to_string(),
            "schedule" => match self.schedule {
                ScheduleKind::Mimic => "mimic".into(),
                ScheduleKind::Constant => "constant".into(),
            },
            "schedule_window" => self.schedule_window.to_string(),
            "n_train" => opt(self.n_train),
            "n_valid" => opt(self.n_valid),
            "pixel_noise" => self.pixel_noise.to_string(),
            "synth_n" => self.synth_n.to_string(),
            "synth_side" => self.synth_side.to_string(),
            "data_seed" => self.data_seed.to_string(),
            "samples" => self.samples.to_string(),
            "burn_in" => self.burn_in.to_string(),
            "thinning" => self.thinning.to_string(),
            "sigma_grid" => join(&self.sigma_grid),
            "c_grid" => join(&self.c_grid),
            "probe_epochs" => self.probe_epochs.to_string(),
            "finetune_epochs" => self.finetune_epochs.to_string(),
            "finetune_lr" => self.finetune_lr.to_string(),
            "finetune_patience" => self.finetune_patience.to_string(),
            "grid_learning_rates" => join(&self.grid_learning_rates),
            "grid_noise" => join(&self.grid_noise),
            "grid_contraction" => join(&self.grid_contraction),
            "out" => self.out.display().to_string(),
            _ => unreachable!("key list and accessor disagree on '{key}'"),
        }
    }

    /// Parses `text`; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut lines: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config(format!("{origin}:{line}: {msg}"));
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', found '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| err(format!("unknown key '{key}'")))?;
            if let Some(first) = lines.insert(known, line) {
                return Err(err(format!("'{key}' already set on line {first}")));
            }
            cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        cfg.validate().map_err(|(key, msg)| match lines.get(key) {
            Some(line) => Error::Config(format!("{origin}:{line}: {key}: {msg}")),
            None => Error::Config(format!("{origin}: {key}: {msg}")),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Every key with its resolved value, in schema order.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }

    /// Reports the first offending key.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let per_layer = |v: usize| v == 1 || v == self.depth;
        if self.depth == 0 {
            return Err(("depth", "must be at least 1".into()));
        }
        if !per_layer(self.widths.len()) || self.widths.contains(&0) {
            return Err(("widths", format!("need 1 or {} positive widths", self.depth)));
        }
        if !per_layer(self.noise.len()) {
            return Err(("noise", format!("need 1 or {} levels", self.depth)));
        }
        if !per_layer(self.lambda.len()) || self.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(("lambda", format!("need 1 or {} non-negative weights", self.depth)));
        }
        for (i, &n) in self.noise.iter().enumerate() {
            CorruptionSpec { kind: self.corruption, level: n }
                .validate()
                .map_err(|_| ("noise", format!("level {} ({n}) is invalid for {}", i + 1, corruption_name(self.corruption))))?;
        }
        if !(self.learning_rate > 0.0) {
            return Err(("learning_rate", "must be positive".into()));
        }
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.decay,
            epsilon: self.epsilon,
        }
        .validate()
        .map_err(|e| ("decay", e.to_string()))?;
        if self.minibatch == 0 {
            return Err(("minibatch", "must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(("samples", "must be at least 1".into()));
        }
        if self.thinning == 0 {
            return Err(("thinning", "must be at least 1".into()));
        }
        if self.sigma_grid.is_empty() || self.sigma_grid.iter().any(|s| !(*s > 0.0)) {
            return Err(("sigma_grid", "need positive bandwidths".into()));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0)) {
            return Err(("c_grid", "need positive values".into()));
        }
        if self.grid_learning_rates.is_empty() {
            return Err(("grid_learning_rates", "need at least one learning rate".into()));
        }
        if !(0.0..=1.0).contains(&self.pixel_noise) {
            return Err(("pixel_noise", "must lie in [0,1]".into()));
        }
        Ok(())
    }

    fn broadcast<T: Copy>(&self, v: &[T]) -> Vec<T> {
        if v.len() == 1 {
            vec![v[0]; self.depth]
        } else {
            v.to_vec()
        }
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        self.broadcast(&self.widths)
    }

    pub fn objective(&self) -> Objective {
        Objective {
            loss: self.loss,
            corruption: self
                .broadcast(&self.noise)
                .into_iter()
                .map(|level| CorruptionSpec { kind: self.corruption, level })
                .collect(),
            regularizers: self
                .broadcast(&self.lambda)
                .into_iter()
                .map(|lambda| RegularizerSpec { kind: self.regularizer, lambda })
                .collect(),
        }
    }

    /// Corruption used by the sampling chain (the input layer's).
    pub fn chain_corruption(&self) -> CorruptionSpec {
        self.objective().corruption[0]
    }

    /// `n_train` rows are needed to size a default schedule window.
    pub fn plan(&self, n_train: usize) -> TrainPlan {
        let mut plan = TrainPlan::new(self.objective(), self.epochs, self.learning_rate, self.seed);
        plan.minibatch = self.minibatch;
        plan.optimizer.decay = self.decay;
        plan.optimizer.epsilon = self.epsilon;
        plan.layerwise_budget = self.budget;
        plan.early_stopping = (self.patience > 0).then_some(EarlyStopping { patience: self.patience });
        if self.scheme == Scheme::Scheduled {
            let window = if self.schedule_window > 0 {
                self.schedule_window
            } else {
                let total = self.epochs * n_train.div_ceil(self.minibatch);
                (total / self.depth).max(1)
            };
            plan.schedule = Some(match self.schedule {
                ScheduleKind::Mimic => Schedule::layerwise_mimic(self.depth, window),
                ScheduleKind::Constant => Schedule::constant(self.depth, window),
            });
        }
        plan
    }

    pub fn grid(&self) -> Grid {
        Grid {
            learning_rates: self.grid_learning_rates.clone(),
            noise_levels: self.grid_noise.clone(),
            contraction_levels: self.grid_contraction.clone(),
            noise_kind: match self.corruption {
                CorruptionKind::None => CorruptionKind::Masking,
                k => k,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_reloads_equal() {
        let cfg = RunConfig::parse("dataset = rect\nscheme = UJ\nwidths = 20,10\nnoise=0.1,0.2\nn_train = 50\n", "t").unwrap();
        let again = RunConfig::parse(&cfg.to_text(), "echo").unwrap();
        assert_eq!(cfg, again);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_text(), "d").unwrap(), RunConfig::default());
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse("depth = 2\n\nlerning_rate = 0.1\n", "run.conf").unwrap_err();
        assert_eq!(e.to_string(), "run.conf:3: unknown key 'lerning_rate'");
        let e = RunConfig::parse("depth = 3\nwidths = 4,5\n", "run.conf").unwrap_err();
        assert!(e.to_string().starts_with("run.conf:2: widths:"), "{e}");
        let e = RunConfig::parse("epochs = ten\n", "c").unwrap_err();
        assert!(e.to_string().starts_with("c:1: epochs:"), "{e}");
        let e = RunConfig::parse("seed = 1\nseed = 2\n", "c").unwrap_err();
        assert!(e.to_string().contains("already set on line 1"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::parse("# header\n\nepochs = 5 # inline\n", "c").unwrap();
        assert_eq!(cfg.epochs, 5);
    }
}
