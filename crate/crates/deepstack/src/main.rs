use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deepstack::commands;
use deepstack::{cache, report, Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "deepstack", version, about = "Train, sample and evaluate stacked autoencoders")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for grid search and Parzen scoring.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download a benchmark into the cache, or import it from a directory.
    Fetch {
        dataset: String,
        /// Directory holding the benchmark's unpacked files.
        #[arg(long, value_name = "DIR")]
        from: Option<PathBuf>,
    },
    /// Train the configured scheme.
    Train,
    /// Run the sampling chain and write the samples.
    Sample {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Keep every k-th chain state.
        #[arg(long, default_value_t = 10)]
        thinning: usize,
        /// Add the nearest training example of each sample.
        #[arg(long)]
        nearest: bool,
    },
    /// Parzen log-likelihood of chain samples on the test split.
    EvalGen {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Linear probe on the model's top-layer features.
    Probe {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Supervised finetuning with a softmax output layer.
    Finetune {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Hyperparameter grid search selected on validation error.
    Grid,
    /// Comparison tables and learning curves from a run directory.
    Report {
        /// Directory holding ledgers and training logs (default: the output directory).
        #[arg(long, value_name = "DIR")]
        runs: Option<PathBuf>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn model_path(cfg: &RunConfig, model: &Option<PathBuf>) -> PathBuf {
    model.clone().unwrap_or_else(|| cfg.out.join(commands::MODEL_FILE))
}

fn show(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::Fetch { dataset, from } => {
            let bench = cache::benchmark(dataset).ok_or_else(|| Error::Config(format!("unknown benchmark '{dataset}'")))?;
            let root = cache::cache_dir();
            let dir = match from {
                Some(src) => cache::import(&root, bench, src)?,
                None => cache::download(&root, bench)?,
            };
            cache::verify(&root, bench)?;
            println!("{} cached in {}", bench.name, dir.display());
        }
        Command::Train => {
            let r = commands::train(&cfg)?;
            for log in r.outcome.logs.iter() {
                if let Some(best) = log.best_epoch {
                    println!("best epoch {best}");
                }
            }
            show(&[r.model]);
            show(&r.logs);
        }
        Command::Sample { model, steps, thinning, nearest } => {
            if *thinning == 0 {
                return Err(Error::Config("--thinning must be at least 1".into()));
            }
            let r = commands::sample(&cfg, &model_path(&cfg, model), *steps, *thinning, *nearest)?;
            println!("{} samples", r.samples.rows());
            show(&r.written);
        }
        Command::EvalGen { model } => println!("{}", commands::eval_gen(&cfg, &model_path(&cfg, model))?),
        Command::Probe { model } => println!("{}", commands::probe(&cfg, &model_path(&cfg, model))?.1),
        Command::Finetune { model } => println!("{}", commands::finetune_model(&cfg, &model_path(&cfg, model))?.1),
        Command::Grid => {
            let r = commands::grid(&cfg)?;
            let best = &r.rows[r.best];
            println!("best point {} (learning rate {})", best.point.id, best.point.learning_rate);
            show(&[r.table]);
        }
        Command::Report { runs } => {
            let dir: &Path = runs.as_deref().unwrap_or(&cfg.out);
            let files = report::write_report(dir, &cfg.out)?;
            print!("{}", files.text);
            show(&files.written);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
