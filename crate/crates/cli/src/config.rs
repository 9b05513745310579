//! Effective run configuration: built-in defaults, then an optional
//! `key=value` file, then command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rul_core::data::{DEFAULT_VAL_FRACTION, DEFAULT_WINDOW_LEN};
use rul_core::genetic::{GaConfig, DEFAULT_BATCH_POOL, DEFAULT_LR_POOL};
use rul_core::model::{CellType, DEFAULT_HIDDEN};
use rul_core::nn::LossKind;

use crate::error::CliError;

pub const SEED_ENV: &str = "RUL_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq)]
pub struct GaSettings {
    pub population_size: usize,
    pub elite_count: usize,
    pub generations: usize,
    pub lr_pool: Vec<f64>,
    pub batch_pool: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub cell_type: CellType,
    pub hidden_dims: Vec<usize>,
    pub window_len: usize,
    pub val_fraction: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub loss: LossKind,
    pub ga: GaSettings,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            output_dir: PathBuf::from("."),
            cell_type: CellType::Lstm,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            window_len: DEFAULT_WINDOW_LEN,
            val_fraction: DEFAULT_VAL_FRACTION,
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 64,
            loss: LossKind::Mae,
            ga: GaSettings {
                population_size: 10,
                elite_count: 2,
                generations: 10,
                lr_pool: DEFAULT_LR_POOL.to_vec(),
                batch_pool: DEFAULT_BATCH_POOL.to_vec(),
            },
            seed: DEFAULT_SEED,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, String> {
    raw.trim()
        .parse()
        .map_err(|_| format!("bad value '{raw}' for {key}"))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, String> {
    raw.split(',').map(|item| parse_value(key, item)).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        match key {
            "data" => self.data_path = Some(PathBuf::from(raw.trim())),
            "output_dir" => self.output_dir = PathBuf::from(raw.trim()),
            "cell" => self.cell_type = parse_value(key, raw)?,
            "hidden" => self.hidden_dims = parse_list(key, raw)?,
            "window_len" => self.window_len = parse_value(key, raw)?,
            "val_fraction" => self.val_fraction = parse_value(key, raw)?,
            "epochs" => self.epochs = parse_value(key, raw)?,
            "learning_rate" => self.learning_rate = parse_value(key, raw)?,
            "batch_size" => self.batch_size = parse_value(key, raw)?,
            "loss" => self.loss = parse_value(key, raw)?,
            "seed" => self.seed = parse_value(key, raw)?,
            "ga.population_size" => self.ga.population_size = parse_value(key, raw)?,
            "ga.elite_count" => self.ga.elite_count = parse_value(key, raw)?,
            "ga.generations" => self.ga.generations = parse_value(key, raw)?,
            "ga.lr_pool" => self.ga.lr_pool = parse_list(key, raw)?,
            "ga.batch_pool" => self.ga.batch_pool = parse_list(key, raw)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Applies a config file. Blank lines and `#` comments are skipped.
    /// Returns whether the file set a seed.
    pub fn apply_file(&mut self, path: &Path) -> Result<bool, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut seeded = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| CliError::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {message}", n + 1),
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key=value".to_string()))?;
            let key = key.trim();
            self.set(key, value).map_err(parse_err)?;
            seeded |= key == "seed";
        }
        Ok(seeded)
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            population_size: self.ga.population_size,
            elite_count: self.ga.elite_count,
            generations: self.ga.generations,
            lr_pool: self.ga.lr_pool.clone(),
            batch_pool: self.ga.batch_pool.clone(),
            seed: self.seed,
            loss: self.loss,
            mutation: true,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Domain(format!("bad config: {m}")));
        if self.window_len == 0 {
            return bad("window_len must be at least 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie strictly between 0 and 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        self.ga_config()
            .validate()
            .map_err(|e| CliError::Domain(format!("bad config: {e}")))
    }

    /// The effective configuration as `key=value` lines, in a fixed order.
    pub fn manifest(&self, command: &str) -> String {
        let mut out = String::new();
        let data = self
            .data_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let lines = [
            ("command", command.to_string()),
            ("data", data),
            ("output_dir", self.output_dir.display().to_string()),
            ("cell", self.cell_type.to_string()),
            ("hidden", join(&self.hidden_dims)),
            ("window_len", self.window_len.to_string()),
            ("val_fraction", self.val_fraction.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("loss", self.loss.to_string()),
            ("seed", self.seed.to_string()),
            ("ga.population_size", self.ga.population_size.to_string()),
            ("ga.elite_count", self.ga.elite_count.to_string()),
            ("ga.generations", self.ga.generations.to_string()),
            ("ga.lr_pool", join(&self.ga.lr_pool)),
            ("ga.batch_pool", join(&self.ga.batch_pool)),
        ];
        for (k, v) in lines {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}
