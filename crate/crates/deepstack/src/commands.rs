//! The work behind each subcommand. Every command reads a [`RunConfig`],
//! writes into its output directory and is deterministic given the config.

use std::fs;
use std::path::{Path, PathBuf};

use deepstack_core::classifier::{
    evaluate, extract_features, finetune, train_linear_probe, EvalReport, FinetuneNet, FinetunePlan, ProbeConfig,
};
use deepstack_core::data::{subsample, synth_bars, synth_rects, Dataset};
use deepstack_core::generative::{
    draw_samples, mean_and_stderr, nearest_training_sample, parzen_fit, parzen_grid_scores, parzen_loglik,
    select_from_scores, GenerativeConfig, GenerativeEval,
};
use deepstack_core::matrix::Matrix;
use deepstack_core::rng::{derive_seed, RngState};
use deepstack_core::train::grid::{run_point, select_best, GridRow};
use deepstack_core::train::{EarlyStopping, Trainer, TrainOutcome};
use deepstack_core::StackParams;
use rayon::prelude::*;

use crate::cache;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ledger::{self, append_row, field, CLASSIFICATION_HEADER, CLASSIFICATION_LEDGER, GENERATIVE_HEADER, GENERATIVE_LEDGER};
use crate::model_file;
use crate::pgm;

pub const MODEL_FILE: &str = "model.daej";
pub const CONFIG_ECHO: &str = "resolved.conf";
pub const SPLIT_FILE: &str = "split.csv";

/// Streams split off the run seed.
const INIT_STREAM: u64 = 101;
const SAMPLE_STREAM: u64 = 102;
const EVAL_STREAM: u64 = 103;
const FINETUNE_STREAM: u64 = 104;
const NOISE_STREAM: u64 = 105;

/// Validation rows per Parzen work unit; fixed so results do not depend
/// on the thread count.
const PARZEN_CHUNK: usize = 64;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Builds the dataset the config names, with any subsampling and pixel
/// noise applied.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let mut rng = RngState::new(cfg.data_seed);
    let synth = |make: fn(usize, usize, &mut RngState) -> deepstack_core::Result<Dataset>, rng: &mut RngState| -> Result<Dataset> {
        let full = make(cfg.synth_n, cfg.synth_side, rng)?;
        let n_train = cfg.n_train.unwrap_or(cfg.synth_n * 3 / 5);
        let n_valid = cfg.n_valid.unwrap_or(cfg.synth_n / 5);
        Ok(full.with_split(n_train, n_valid)?)
    };
    let data = match cfg.dataset.as_str() {
        "synth-bars" => synth(synth_bars, &mut rng)?,
        "synth-rects" => synth(synth_rects, &mut rng)?,
        name => {
            let bench = cache::benchmark(name).ok_or_else(|| {
                let known: Vec<&str> = cache::BENCHMARKS.iter().map(|b| b.name).collect();
                Error::Config(format!("unknown dataset '{name}' (synth-bars, synth-rects, {})", known.join(", ")))
            })?;
            let full = cache::load_benchmark(&cache::cache_dir(), bench)?;
            match (cfg.n_train, cfg.n_valid) {
                (None, None) => full,
                (t, v) => subsample(
                    &full,
                    t.unwrap_or(full.train.len()),
                    v.unwrap_or(full.valid.len()),
                    cfg.data_seed,
                )?,
            }
        }
    };
    if cfg.pixel_noise > 0.0 {
        return Ok(data.with_pixel_noise(cfg.pixel_noise, &mut rng.split(NOISE_STREAM))?);
    }
    Ok(data)
}

pub fn initial_stack(cfg: &RunConfig, input_width: usize) -> Result<StackParams> {
    let mut rng = RngState::new(cfg.seed).split(INIT_STREAM);
    Ok(StackParams::init(input_width, &cfg.layer_widths(), cfg.tied, &mut rng)?)
}

fn log_name(cfg: &RunConfig, point: usize, part: Option<usize>) -> String {
    let suffix = part.map(|i| format!("-part{}", i + 1)).unwrap_or_default();
    format!("trainlog-{}-{}-p{point}{suffix}.csv", cfg.scheme.name(), cfg.dataset)
}

fn write_logs(dir: &Path, cfg: &RunConfig, point: usize, outcome: &TrainOutcome, depth: usize) -> Result<Vec<PathBuf>> {
    let many = outcome.logs.len() > 1;
    outcome
        .logs
        .iter()
        .enumerate()
        .map(|(i, log)| {
            let path = dir.join(log_name(cfg, point, many.then_some(i)));
            ledger::write_file(&path, ledger::train_log_csv(log, depth))?;
            Ok(path)
        })
        .collect()
}

pub struct TrainResult {
    pub model: PathBuf,
    pub logs: Vec<PathBuf>,
    pub outcome: TrainOutcome,
}

/// Trains the configured scheme and writes the model, training logs, the
/// resolved config and the split manifest.
pub fn train(cfg: &RunConfig) -> Result<TrainResult> {
    let data = load_dataset(cfg)?;
    let init = initial_stack(cfg, data.dim())?;
    let plan = cfg.plan(data.train.len());
    create_dir(&cfg.out)?;
    ledger::write_file(&cfg.out.join(CONFIG_ECHO), cfg.to_text())?;
    ledger::write_file(&cfg.out.join(SPLIT_FILE), ledger::split_manifest(&data))?;
    let clock = WallClock::new();
    let outcome = Trainer::with_clock(&plan, &clock).run(cfg.scheme, init, &data)?;
    let model = cfg.out.join(MODEL_FILE);
    model_file::save(&outcome.stack, &model)?;
    let logs = write_logs(&cfg.out, cfg, 0, &outcome, cfg.depth)?;
    Ok(TrainResult { model, logs, outcome })
}

struct WallClock(std::time::Instant);

impl WallClock {
    fn new() -> Self {
        WallClock(std::time::Instant::now())
    }
}

impl deepstack_core::train::Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub struct SampleResult {
    pub samples: Matrix,
    pub nearest: Option<Vec<usize>>,
    pub written: Vec<PathBuf>,
}

/// Runs the sampling chain from a random validation example and writes
/// `samples.csv` (plus `samples.pgm` for square images).
pub fn sample(cfg: &RunConfig, model: &Path, steps: usize, thinning: usize, nearest: bool) -> Result<SampleResult> {
    let stack = model_file::load(model)?;
    let data = load_dataset(cfg)?;
    if data.dim() != stack.input_width() {
        return Err(Error::Config(format!("model expects width {}, dataset '{}' has {}", stack.input_width(), cfg.dataset, data.dim())));
    }
    if data.valid.is_empty() {
        return Err(Error::Config("sampling starts from a validation example; the validation split is empty".into()));
    }
    let mut rng = RngState::new(cfg.seed).split(SAMPLE_STREAM);
    let start = rng.below(data.valid.len());
    let samples = deepstack_core::generative::gsn_chain(&stack, data.valid.x.row(start), steps, &cfg.chain_corruption(), &mut rng, thinning)?;
    let nearest = if nearest {
        Some(
            samples
                .iter_rows()
                .map(|s| nearest_training_sample(s, &data.train.x))
                .collect::<deepstack_core::Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    create_dir(&cfg.out)?;
    let mut csv = String::from("step");
    for j in 1..=samples.cols() {
        csv.push_str(&format!(",x{j}"));
    }
    if nearest.is_some() {
        csv.push_str(",nearest");
    }
    csv.push('\n');
    for (k, row) in samples.iter_rows().enumerate() {
        csv.push_str(&((k + 1) * thinning).to_string());
        for v in row {
            csv.push_str(&format!(",{v}"));
        }
        if let Some(n) = &nearest {
            csv.push_str(&format!(",{}", data.train.source[n[k]]));
        }
        csv.push('\n');
    }
    let mut written = vec![cfg.out.join("samples.csv")];
    ledger::write_file(&written[0], csv)?;
    if let Some(side) = pgm::square_side(samples.cols()) {
        let cols = (samples.rows() as f64).sqrt().ceil() as usize;
        let path = cfg.out.join("samples.pgm");
        ledger::write_file(&path, pgm::image_grid(&samples, side, cols)?)?;
        written.push(path);
        if let Some(n) = &nearest {
            let path = cfg.out.join("nearest.pgm");
            ledger::write_file(&path, pgm::image_grid(&data.train.x.select_rows(n), side, cols)?)?;
            written.push(path);
        }
    }
    Ok(SampleResult { samples, nearest, written })
}

/// Generative evaluation with the Parzen work spread over the rayon pool.
pub fn evaluate_generative_parallel(stack: &StackParams, data: &Dataset, config: &GenerativeConfig, rng: &mut RngState) -> Result<GenerativeEval> {
    if data.test.is_empty() {
        return Err(Error::Config("generative evaluation needs a test split".into()));
    }
    let samples = draw_samples(stack, data, config, rng)?;
    let valid = &data.valid.x;
    let starts: Vec<usize> = (0..valid.rows()).step_by(PARZEN_CHUNK).collect();
    let partial: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&s| {
            let chunk = valid.row_range(s, (s + PARZEN_CHUNK).min(valid.rows()));
            let means = parzen_grid_scores(&samples, &chunk, &config.sigma_grid)?;
            Ok(means.into_iter().map(|m| m * chunk.rows() as f64).collect())
        })
        .collect::<deepstack_core::Result<_>>()?;
    let mut scores = vec![0.0; config.sigma_grid.len()];
    for p in &partial {
        for (s, v) in scores.iter_mut().zip(p) {
            *s += v;
        }
    }
    let sigma = select_from_scores(&config.sigma_grid, &scores);
    let model = parzen_fit(samples, sigma)?;
    let lls: Vec<f64> = (0..data.test.len())
        .into_par_iter()
        .map(|i| parzen_loglik(&model, data.test.x.row(i)))
        .collect::<deepstack_core::Result<_>>()?;
    let (mean_ll, stderr) = mean_and_stderr(&lls);
    Ok(GenerativeEval {
        mean_ll,
        stderr,
        sigma,
        samples: model.components,
    })
}

fn generative_config(cfg: &RunConfig) -> GenerativeConfig {
    GenerativeConfig {
        samples: cfg.samples,
        sigma_grid: cfg.sigma_grid.clone(),
        burn_in: cfg.burn_in,
        thinning: cfg.thinning,
        corruption: cfg.chain_corruption(),
    }
}

/// Scores the model with the Parzen estimator and appends a row to the
/// generative ledger. Returns the row.
pub fn eval_gen(cfg: &RunConfig, model: &Path) -> Result<String> {
    let stack = model_file::load(model)?;
    let data = load_dataset(cfg)?;
    let mut rng = RngState::new(cfg.seed).split(EVAL_STREAM);
    let eval = evaluate_generative_parallel(&stack, &data, &generative_config(cfg), &mut rng)?;
    let row = format!(
        "{},{},{},{},{},{},{},{}",
        field(&cfg.dataset),
        cfg.scheme.name(),
        stack.depth(),
        eval.mean_ll,
        eval.stderr,
        eval.sigma,
        cfg.samples,
        cfg.seed
    );
    create_dir(&cfg.out)?;
    append_row(&cfg.out.join(GENERATIVE_LEDGER), GENERATIVE_HEADER, &row)?;
    Ok(row)
}

fn classification_row(cfg: &RunConfig, depth: usize, stage: &str, report: &EvalReport) -> Result<String> {
    let row = format!(
        "{},{},{depth},{stage},{},{},{}",
        field(&cfg.dataset),
        cfg.scheme.name(),
        report.error,
        report.ci,
        cfg.seed
    );
    create_dir(&cfg.out)?;
    append_row(&cfg.out.join(CLASSIFICATION_LEDGER), CLASSIFICATION_HEADER, &row)?;
    Ok(row)
}

fn labels<'a>(subset: &'a deepstack_core::data::Subset, name: &str) -> Result<&'a [usize]> {
    subset
        .labels()
        .map_err(|_| Error::Config(format!("the {name} split has no labels")))
}

/// Linear probe on the model's top-layer features.
pub fn probe(cfg: &RunConfig, model: &Path) -> Result<(EvalReport, String)> {
    let stack = model_file::load(model)?;
    let data = load_dataset(cfg)?;
    let features = |x: &Matrix| extract_features(&stack, x);
    let config = ProbeConfig {
        c_grid: cfg.c_grid.clone(),
        epochs: cfg.probe_epochs,
    };
    let valid_x = features(&data.valid.x)?;
    let valid_y = if data.valid.is_empty() { &[][..] } else { labels(&data.valid, "validation")? };
    let mut probe = train_linear_probe(&features(&data.train.x)?, labels(&data.train, "training")?, data.classes, &config, (&valid_x, valid_y))?;
    probe.feature_tag = format!("h{}", stack.depth());
    let report = evaluate(&probe, &features(&data.test.x)?, labels(&data.test, "test")?)?;
    let row = classification_row(cfg, stack.depth(), "probe", &report)?;
    Ok((report, row))
}

/// Supervised finetuning of the model's encoder with a softmax output.
pub fn finetune_model(cfg: &RunConfig, model: &Path) -> Result<(EvalReport, String)> {
    let stack = model_file::load(model)?;
    let data = load_dataset(cfg)?;
    let mut rng = RngState::new(cfg.seed).split(FINETUNE_STREAM);
    let net = FinetuneNet::new(stack, data.classes, &mut rng)?;
    let mut plan = FinetunePlan::new(cfg.finetune_epochs, cfg.finetune_lr, derive_seed(cfg.seed, FINETUNE_STREAM));
    plan.minibatch = cfg.minibatch;
    plan.early_stopping = (cfg.finetune_patience > 0).then_some(EarlyStopping { patience: cfg.finetune_patience });
    let out = finetune(net, &data, &plan)?;
    let row = classification_row(cfg, out.net.stack.depth(), "finetune", &out.report)?;
    Ok((out.report, row))
}

pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub best: usize,
    pub table: PathBuf,
}

/// Trains every grid point in parallel and writes `grid.csv`; the best
/// point is retrained into the output directory's model file.
pub fn grid(cfg: &RunConfig) -> Result<GridResult> {
    let data = load_dataset(cfg)?;
    if data.valid.is_empty() {
        return Err(Error::Config("grid search needs a validation split".into()));
    }
    let init = initial_stack(cfg, data.dim())?;
    let base = cfg.plan(data.train.len());
    let grid = cfg.grid();
    let points = grid.points()?;
    let rows: Vec<GridRow> = points
        .par_iter()
        .map(|p| run_point(&grid, p, &init, &data, &base, cfg.scheme))
        .collect();
    let best = select_best(&rows)?;
    create_dir(&cfg.out)?;
    let mut csv = String::from("id,learning_rate,noise,contraction,seed,valid_err,status\n");
    for r in &rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let (err, status) = match &r.outcome {
            Ok(v) => (v.to_string(), "ok".to_string()),
            Err(e) => (String::new(), field(&format!("failed: {e}"))),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{err},{status}\n",
            r.point.id,
            r.point.learning_rate,
            opt(r.point.noise),
            opt(r.point.contraction),
            r.seed
        ));
    }
    let table = cfg.out.join("grid.csv");
    ledger::write_file(&table, csv)?;
    let plan = grid.apply(&rows[best].point, &base);
    let outcome = Trainer::new(&plan).run(cfg.scheme, init, &data)?;
    model_file::save(&outcome.stack, cfg.out.join(MODEL_FILE))?;
    write_logs(&cfg.out, cfg, rows[best].point.id, &outcome, cfg.depth)?;
    ledger::write_file(&cfg.out.join(CONFIG_ECHO), cfg.to_text())?;
    Ok(GridResult { rows, best, table })
}
