mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, SEED_ENV};
use error::CliError;

/// Recurrent RUL models with genetic hyper-parameter search.
#[derive(Parser)]
#[command(name = "rul", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the normalizer and report dataset size.
    Preprocess(Common),
    /// Train a fixed-hyper-parameter baseline.
    Train(TrainArgs),
    /// Evolve learning rate and batch size over generations.
    Evolve(EvolveArgs),
    /// Write a predicted-vs-actual RUL trace for one engine.
    Predict(PredictArgs),
    /// Compare saved models on the validation split.
    Compare(CompareArgs),
}

#[derive(Args)]
struct Common {
    /// key=value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CMAPSS-format text file.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Falls back to the config file, then RUL_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Recurrent layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = ["lstm", "gru"])]
    cell: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = ["mae", "mse"])]
    loss: Option<String>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = ["lstm", "gru"])]
    cell: Option<String>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    elites: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    lr_pool: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    batch_pool: Option<Vec<usize>>,
    #[arg(long, value_parser = ["mae", "mse"])]
    loss: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    engine: u32,
    /// Defaults to normalizer.txt next to the model.
    #[arg(long)]
    normalizer: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// One per model, in order. Defaults to the model file stems.
    #[arg(long = "label")]
    labels: Vec<String>,
    /// Also write a prediction trace for this engine per model.
    #[arg(long)]
    trace_engine: Option<u32>,
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Defaults, then the config file, then flags. The seed falls back to
/// `RUL_SEED` when neither the file nor the flags set it.
fn resolve(common: &Common, mut flags: Vec<(&str, Option<String>)>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let mut seeded = false;
    if let Some(path) = &common.config {
        seeded = cfg.apply_file(path)?;
    }
    if !seeded && common.seed.is_none() {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            cfg.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Domain(format!("bad config: {SEED_ENV}='{raw}' is not an integer")))?;
        }
    }
    let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    flags.extend([
        ("data", path_str(&common.data)),
        ("output_dir", path_str(&common.output_dir)),
        ("seed", common.seed.map(|s| s.to_string())),
        ("window_len", common.window_len.map(|w| w.to_string())),
        ("val_fraction", common.val_fraction.map(|f| f.to_string())),
        ("hidden", common.hidden.as_deref().map(join)),
    ]);
    for (key, value) in flags {
        if let Some(value) = value {
            cfg.set(key, &value)
                .map_err(|m| CliError::Domain(format!("bad config: {m}")))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Preprocess(common) => commands::preprocess(&resolve(&common, vec![])?),
        Command::Train(a) => {
            let cfg = resolve(
                &a.common,
                vec![
                    ("cell", a.cell),
                    ("epochs", a.epochs.map(|v| v.to_string())),
                    ("learning_rate", a.learning_rate.map(|v| v.to_string())),
                    ("batch_size", a.batch_size.map(|v| v.to_string())),
                    ("loss", a.loss),
                ],
            )?;
            commands::train(&cfg)
        }
        Command::Evolve(a) => {
            let cfg = resolve(
                &a.common,
                vec![
                    ("cell", a.cell),
                    ("ga.population_size", a.population.map(|v| v.to_string())),
                    ("ga.elite_count", a.elites.map(|v| v.to_string())),
                    ("ga.generations", a.generations.map(|v| v.to_string())),
                    ("ga.lr_pool", a.lr_pool.as_deref().map(join)),
                    ("ga.batch_pool", a.batch_pool.as_deref().map(join)),
                    ("loss", a.loss),
                ],
            )?;
            commands::evolve(&cfg)
        }
        Command::Predict(a) => {
            let cfg = resolve(&a.common, vec![])?;
            commands::predict(&cfg, &a.model, a.engine, a.normalizer.as_deref())
        }
        Command::Compare(a) => {
            let cfg = resolve(&a.common, vec![])?;
            commands::compare(&cfg, &a.models, &a.labels, a.trace_engine)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
