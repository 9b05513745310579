//! Plot-ready CSV output: epoch tables, generation tables, prediction
//! traces and model comparisons. UTF-8, LF line endings, header first.

use std::collections::HashSet;
use std::io::{Read, Write};

use thiserror::Error;

use crate::data::{window, DataError, EngineSeries, NormalizationStats};
use crate::genetic::GenerationReport;
use crate::model::{EpochMetrics, Model, ModelError};

pub const EPOCH_HEADER: [&str; 5] = ["epoch", "mse", "mae", "val_mse", "val_mae"];
pub const GENERATION_HEADER: [&str; 9] = [
    "generation",
    "individual",
    "lr",
    "batch_size",
    "mse",
    "mae",
    "val_mse",
    "val_mae",
    "delta_loss",
];
pub const TRACE_HEADER: [&str; 3] = ["cycle", "actual_rul", "predicted_rul"];
pub const COMPARISON_HEADER: [&str; 5] = ["label", "val_mse", "val_mae", "best", "traces"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to report: {0}")]
    Empty(&'static str),
    #[error("duplicate model label '{0}'")]
    DuplicateLabel(String),
    #[error("engine {engine} has {cycles} cycles, fewer than the window of {window_len}")]
    EngineTooShort {
        engine: u32,
        cycles: usize,
        window_len: usize,
    },
    #[error("malformed table: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Shortest round-trip decimal, padded to at least four decimal places.
pub fn format_value(v: f64) -> String {
    let s = format!("{v}");
    match s.split_once('.') {
        Some((_, decimals)) if decimals.len() >= 4 => s,
        _ if v.is_finite() => format!("{v:.4}"),
        _ => s,
    }
}

fn writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

pub fn emit_epoch_table<W: Write>(metrics: &[EpochMetrics], sink: W) -> Result<(), ReportError> {
    if metrics.is_empty() {
        return Err(ReportError::Empty("epoch metrics"));
    }
    let mut w = writer(sink);
    w.write_record(EPOCH_HEADER)?;
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            format_value(m.train_mse),
            format_value(m.train_mae),
            format_value(m.val_mse),
            format_value(m.val_mae),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_epoch_table<R: Read>(source: R) -> Result<Vec<EpochMetrics>, ReportError> {
    let mut r = csv::Reader::from_reader(source);
    if r.headers()?.iter().ne(EPOCH_HEADER) {
        return Err(ReportError::Parse("unexpected epoch table header".into()));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| -> Result<f64, ReportError> {
                rec[i]
                    .parse()
                    .map_err(|_| ReportError::Parse(format!("bad number '{}'", &rec[i])))
            };
            Ok(EpochMetrics {
                epoch: rec[0]
                    .parse()
                    .map_err(|_| ReportError::Parse(format!("bad epoch '{}'", &rec[0])))?,
                train_mse: num(1)?,
                train_mae: num(2)?,
                val_mse: num(3)?,
                val_mae: num(4)?,
            })
        })
        .collect()
}

/// One row per individual per generation.
pub fn emit_generation_table<'a, W, I>(reports: I, sink: W) -> Result<(), ReportError>
where
    W: Write,
    I: IntoIterator<Item = &'a GenerationReport>,
{
    let mut w = writer(sink);
    w.write_record(GENERATION_HEADER)?;
    let mut rows = 0usize;
    for report in reports {
        for ind in &report.individuals {
            let e = &ind.evaluation;
            w.write_record([
                report.generation.to_string(),
                ind.individual.to_string(),
                format!("{}", ind.genome.learning_rate),
                ind.genome.batch_size.to_string(),
                format_value(e.train_mse),
                format_value(e.train_mae),
                format_value(e.val_mse),
                format_value(e.val_mae),
                format_value(e.delta_loss),
            ])?;
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(ReportError::Empty("generation reports"));
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub cycle: usize,
    pub actual_rul: usize,
    pub predicted_rul: f64,
}

/// Predicted against actual remaining life, in cycles, for one engine.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTrace {
    pub engine_id: u32,
    pub rows: Vec<TraceRow>,
}

/// Predicts at every cycle from `window_len` to `T`, scaling the model
/// output by the stored RUL denominator.
pub fn prediction_trace(
    model: &Model,
    engine: &EngineSeries,
    stats: &NormalizationStats,
) -> Result<PredictionTrace, ReportError> {
    let window_len = model.spec.window_len;
    let total = engine.total_cycles();
    if total < window_len {
        return Err(ReportError::EngineTooShort {
            engine: engine.unit_id,
            cycles: total,
            window_len,
        });
    }
    let windows = window(engine, stats, window_len, stats.rul_denominator)?;
    let rows = windows
        .sequences
        .iter()
        .enumerate()
        .map(|(k, seq)| {
            let cycle = window_len + k;
            Ok(TraceRow {
                cycle,
                actual_rul: total - cycle,
                predicted_rul: model.predict(seq).map_err(ModelError::from)? * stats.rul_denominator,
            })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    Ok(PredictionTrace {
        engine_id: engine.unit_id,
        rows,
    })
}

pub fn emit_prediction_trace<W: Write>(trace: &PredictionTrace, sink: W) -> Result<(), ReportError> {
    let mut w = writer(sink);
    w.write_record(TRACE_HEADER)?;
    for row in &trace.rows {
        w.write_record([
            row.cycle.to_string(),
            row.actual_rul.to_string(),
            format_value(row.predicted_rul),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Final validation metrics of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonSummary {
    pub label: String,
    pub val_mse: f64,
    pub val_mae: f64,
    /// Paths of prediction traces produced for this model, if any.
    pub traces: Vec<String>,
}

/// Index of the lowest validation MAE; the first one wins ties.
pub fn best_summary(summaries: &[ComparisonSummary]) -> Option<usize> {
    (0..summaries.len()).reduce(|best, i| {
        if summaries[i].val_mae < summaries[best].val_mae {
            i
        } else {
            best
        }
    })
}

pub fn emit_comparison<W: Write>(summaries: &[ComparisonSummary], sink: W) -> Result<(), ReportError> {
    let best = best_summary(summaries).ok_or(ReportError::Empty("model summaries"))?;
    let mut seen = HashSet::new();
    for s in summaries {
        if !seen.insert(s.label.as_str()) {
            return Err(ReportError::DuplicateLabel(s.label.clone()));
        }
    }
    let mut w = writer(sink);
    w.write_record(COMPARISON_HEADER)?;
    for (i, s) in summaries.iter().enumerate() {
        w.write_record([
            s.label.clone(),
            format_value(s.val_mse),
            format_value(s.val_mae),
            (i == best).to_string(),
            s.traces.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(label: &str, mae: f64) -> ComparisonSummary {
        ComparisonSummary {
            label: label.into(),
            val_mse: mae * mae,
            val_mae: mae,
            traces: vec![],
        }
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_value(0.0112), "0.0112");
        assert_eq!(format_value(0.096), "0.0960");
        assert_eq!(format_value(2.0), "2.0000");
        assert_eq!(format_value(0.011234567), "0.011234567");
        assert_eq!(format_value(-0.0016), "-0.0016");
        assert_eq!(format_value(1e-7), "0.0000001");
    }

    #[test]
    fn first_epoch_row() {
        let row = EpochMetrics {
            epoch: 1,
            train_mse: 0.0112,
            train_mae: 0.0729,
            val_mse: 0.0182,
            val_mae: 0.0960,
        };
        let mut out = Vec::new();
        emit_epoch_table(&[row], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "epoch,mse,mae,val_mse,val_mae\n1,0.0112,0.0729,0.0182,0.0960\n");
        assert_eq!(read_epoch_table(text.as_bytes()).unwrap(), vec![row]);
    }

    #[test]
    fn empty_tables_rejected() {
        assert!(matches!(emit_epoch_table(&[], Vec::new()), Err(ReportError::Empty(_))));
        assert!(matches!(emit_comparison(&[], Vec::new()), Err(ReportError::Empty(_))));
        assert!(matches!(
            emit_generation_table(&[], Vec::new()),
            Err(ReportError::Empty(_))
        ));
    }

    #[test]
    fn comparison_flags_lowest_mae() {
        let rows = [summary("LSTM", 0.0825), summary("GRU", 0.0851), summary("GA", 0.0805)];
        let mut out = Vec::new();
        emit_comparison(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let flagged: Vec<&str> = text
            .lines()
            .skip(1)
            .filter(|l| l.split(',').nth(3) == Some("true"))
            .collect();
        assert_eq!(flagged.len(), 1);
        assert!(flagged[0].starts_with("GA,"));

        let mut out = Vec::new();
        emit_comparison(&[summary("solo", 0.3)], &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("solo,0.0900,0.3000,true,"));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let rows = [summary("LSTM", 0.1), summary("LSTM", 0.2)];
        assert!(matches!(
            emit_comparison(&rows, Vec::new()),
            Err(ReportError::DuplicateLabel(l)) if l == "LSTM"
        ));
    }
}
