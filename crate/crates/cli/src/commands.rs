use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rul_core::data::{
    build_dataset, fit_normalizer, group_by_engine, parse_cmapss, train_val_split, EngineSeries, NormalizationStats,
    WindowedDataset, FEATURES,
};
use rul_core::genetic::run_evolution;
use rul_core::model::{evaluate, fit, load_model, save_model, Model, ModelSpec, TrainConfig};
use rul_core::report::{
    emit_comparison, emit_epoch_table, emit_generation_table, emit_prediction_trace, format_value,
    prediction_trace, ComparisonSummary,
};

use crate::config::RunConfig;
use crate::error::CliError;

const NORMALIZER_FILE: &str = "normalizer.txt";

struct Prepared {
    series: Vec<EngineSeries>,
    stats: NormalizationStats,
}

impl Prepared {
    fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let path = cfg
            .data_path
            .as_deref()
            .ok_or_else(|| CliError::Domain("bad config: no data file given (--data)".into()))?;
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let records = parse_cmapss(&text).map_err(CliError::data(path))?;
        let series = group_by_engine(&records).map_err(CliError::data(path))?;
        let stats = fit_normalizer(&series).map_err(CliError::data(path))?;
        Ok(Self { series, stats })
    }

    fn windows(&self, window_len: usize) -> Result<WindowedDataset, CliError> {
        let ds = build_dataset(&self.series, &self.stats, window_len).map_err(|e| CliError::Domain(e.to_string()))?;
        if ds.is_empty() {
            return Err(CliError::Domain(format!(
                "no engine has at least {window_len} cycles"
            )));
        }
        Ok(ds)
    }

    fn split(&self, cfg: &RunConfig, window_len: usize) -> Result<(WindowedDataset, WindowedDataset), CliError> {
        let ds = self.windows(window_len)?;
        let (train, val) =
            train_val_split(&ds, cfg.val_fraction, cfg.seed).map_err(|e| CliError::Domain(e.to_string()))?;
        if train.is_empty() || val.is_empty() {
            return Err(CliError::Domain(format!(
                "{} sequences are too few to split at val_fraction={}",
                ds.len(),
                cfg.val_fraction
            )));
        }
        Ok((train, val))
    }

    fn engine(&self, id: u32) -> Result<&EngineSeries, CliError> {
        self.series
            .iter()
            .find(|s| s.unit_id == id)
            .ok_or_else(|| CliError::Domain(format!("unknown engine id {id}")))
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.output_dir).map_err(CliError::io(&cfg.output_dir))?;
    Ok(&cfg.output_dir)
}

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
    fs::write(&path, bytes).map_err(CliError::io(&path))?;
    Ok(path)
}

fn write_manifest(cfg: &RunConfig, command: &str, extra: &[(&str, String)]) -> Result<(), CliError> {
    let mut text = cfg.manifest(command);
    for (k, v) in extra {
        text.push_str(&format!("{k}={v}\n"));
    }
    write(out_dir(cfg)?.join(format!("{command}_manifest.txt")), text)?;
    Ok(())
}

fn model_spec(cfg: &RunConfig) -> ModelSpec {
    ModelSpec {
        hidden_dims: cfg.hidden_dims.clone(),
        window_len: cfg.window_len,
        n_features: FEATURES,
        ..ModelSpec::new(cfg.cell_type, cfg.seed)
    }
}

fn ensure_finite(values: &[f64], what: &str) -> Result<(), CliError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("{what} is not finite")))
    }
}

pub fn preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let data = Prepared::load(cfg)?;
    let ds = data.windows(cfg.window_len)?;
    let dir = out_dir(cfg)?;
    write(dir.join(NORMALIZER_FILE), data.stats.to_text())?;
    write_manifest(cfg, "preprocess", &[])?;
    println!("engines={}", data.series.len());
    println!("sequences={}", ds.len());
    println!("window_len={}", ds.window_len);
    println!("n_features={}", ds.n_features);
    println!("rul_denominator={}", data.stats.rul_denominator);
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = Prepared::load(cfg)?;
    let (train, val) = data.split(cfg, cfg.window_len)?;
    let mut model = rul_core::model::build_model(&model_spec(cfg))?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        loss: cfg.loss,
        shuffle_seed: cfg.seed,
    };
    let metrics = fit(&mut model, &train, &val, &tc, cfg.epochs)?;
    for m in &metrics {
        ensure_finite(&[m.train_mse, m.train_mae, m.val_mse, m.val_mae], "training loss")?;
    }

    let dir = out_dir(cfg)?;
    let cell = cfg.cell_type.to_string();
    let mut table = Vec::new();
    emit_epoch_table(&metrics, &mut table)?;
    write(dir.join(format!("{cell}_epochs.csv")), table)?;
    save_model(&model, dir.join(format!("{cell}_model.bin")))?;
    write(dir.join(NORMALIZER_FILE), data.stats.to_text())?;
    write_manifest(cfg, "train", &[])?;

    let last = metrics.last().expect("at least one epoch");
    println!(
        "{cell}: {} epochs, train_mae={} val_mae={}",
        metrics.len(),
        format_value(last.train_mae),
        format_value(last.val_mae)
    );
    Ok(())
}

pub fn evolve(cfg: &RunConfig) -> Result<(), CliError> {
    let data = Prepared::load(cfg)?;
    let (train, val) = data.split(cfg, cfg.window_len)?;
    let evo = run_evolution(&model_spec(cfg), &cfg.ga_config(), &train, &val)?;
    let best = evo.best.evaluation.expect("final generation is evaluated");
    ensure_finite(&[best.val_mse, best.val_mae], "validation loss")?;
    let last = evo.reports.last().expect("at least one generation");

    let dir = out_dir(cfg)?;
    let mut all = Vec::new();
    emit_generation_table(&evo.reports, &mut all)?;
    write(dir.join("generations.csv"), all)?;
    let mut final_table = Vec::new();
    emit_generation_table([last], &mut final_table)?;
    write(dir.join("final_generation.csv"), final_table)?;
    save_model(&evo.best.model, dir.join("best_model.bin"))?;
    let genome = format!(
        "learning_rate={}\nbatch_size={}\ngeneration={}\nindividual={}\nval_mse={}\nval_mae={}\n",
        evo.best.genome.learning_rate,
        evo.best.genome.batch_size,
        last.generation,
        last.best + 1,
        format_value(best.val_mse),
        format_value(best.val_mae),
    );
    write(dir.join("best_genome.txt"), genome)?;
    write(dir.join(NORMALIZER_FILE), data.stats.to_text())?;
    write_manifest(cfg, "evolve", &[])?;

    println!(
        "{} generations, best individual {} lr={} batch_size={} val_mae={}",
        evo.reports.len(),
        last.best + 1,
        evo.best.genome.learning_rate,
        evo.best.genome.batch_size,
        format_value(best.val_mae)
    );
    Ok(())
}

fn check_features(model: &Model, path: &Path) -> Result<(), CliError> {
    if model.spec.n_features != FEATURES {
        return Err(CliError::Domain(format!(
            "{} expects {} features, CMAPSS rows have {FEATURES}",
            path.display(),
            model.spec.n_features
        )));
    }
    Ok(())
}

fn load(path: &Path) -> Result<Model, CliError> {
    let model = load_model(path).map_err(|e| match e {
        rul_core::model::ModelError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        rul_core::model::ModelError::Format(message) => CliError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other.into(),
    })?;
    check_features(&model, path)?;
    Ok(model)
}

pub fn predict(cfg: &RunConfig, model_path: &Path, engine: u32, normalizer: Option<&Path>) -> Result<(), CliError> {
    let model = load(model_path)?;
    let stats_path = match normalizer {
        Some(p) => p.to_path_buf(),
        None => model_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(NORMALIZER_FILE),
    };
    let text = fs::read_to_string(&stats_path).map_err(CliError::io(&stats_path))?;
    let stats = NormalizationStats::from_text(&text).map_err(CliError::data(&stats_path))?;

    let data = Prepared::load(cfg)?;
    let trace = prediction_trace(&model, data.engine(engine)?, &stats)?;
    ensure_finite(
        &trace.rows.iter().map(|r| r.predicted_rul).collect::<Vec<_>>(),
        "prediction",
    )?;
    let mut csv = Vec::new();
    emit_prediction_trace(&trace, &mut csv)?;
    let out = write(out_dir(cfg)?.join(format!("trace_engine_{engine}.csv")), csv)?;
    write_manifest(
        cfg,
        "predict",
        &[
            ("model", model_path.display().to_string()),
            ("normalizer", stats_path.display().to_string()),
            ("engine", engine.to_string()),
        ],
    )?;
    println!("{} rows -> {}", trace.rows.len(), out.display());
    Ok(())
}

fn default_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn compare(
    cfg: &RunConfig,
    model_paths: &[PathBuf],
    labels: &[String],
    trace_engine: Option<u32>,
) -> Result<(), CliError> {
    if !labels.is_empty() && labels.len() != model_paths.len() {
        return Err(CliError::Domain(format!(
            "{} labels given for {} models",
            labels.len(),
            model_paths.len()
        )));
    }
    let labels: Vec<String> = if labels.is_empty() {
        model_paths.iter().map(|p| default_label(p)).collect()
    } else {
        labels.to_vec()
    };
    let mut seen = HashSet::new();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
        return Err(CliError::Domain(format!("duplicate model label '{dup}'")));
    }

    let data = Prepared::load(cfg)?;
    let dir = out_dir(cfg)?;
    let mut summaries = Vec::new();
    for (path, label) in model_paths.iter().zip(&labels) {
        let model = load(path)?;
        let (_, val) = data.split(cfg, model.spec.window_len)?;
        let (val_mse, val_mae) = evaluate(&model, &val)?;
        ensure_finite(&[val_mse, val_mae], "validation loss")?;
        let mut traces = Vec::new();
        if let Some(id) = trace_engine {
            let trace = prediction_trace(&model, data.engine(id)?, &data.stats)?;
            let mut csv = Vec::new();
            emit_prediction_trace(&trace, &mut csv)?;
            let name = format!("trace_{label}_engine_{id}.csv");
            write(dir.join(&name), csv)?;
            traces.push(name);
        }
        summaries.push(ComparisonSummary {
            label: label.clone(),
            val_mse,
            val_mae,
            traces,
        });
    }
    let mut csv = Vec::new();
    emit_comparison(&summaries, &mut csv)?;
    write(dir.join("comparison.csv"), csv)?;
    let models: Vec<String> = model_paths.iter().map(|p| p.display().to_string()).collect();
    write_manifest(cfg, "compare", &[("models", models.join(",")), ("labels", labels.join(","))])?;

    let best = rul_core::report::best_summary(&summaries).expect("at least one model");
    for (i, s) in summaries.iter().enumerate() {
        let flag = if i == best { " (best)" } else { "" };
        println!("{}: val_mse={} val_mae={}{flag}", s.label, format_value(s.val_mse), format_value(s.val_mae));
    }
    Ok(())
}
