//! CMAPSS run-to-failure ingestion: parsing, per-engine grouping, min-max
//! scaling, RUL targets and sliding windows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::Mat;

pub const SETTINGS: usize = 3;
pub const SENSORS: usize = 21;
/// Features per cycle: settings followed by sensors.
pub const FEATURES: usize = SETTINGS + SENSORS;
pub const COLUMNS: usize = 2 + FEATURES;
pub const DEFAULT_WINDOW_LEN: usize = 20;
pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("line {line}: expected {COLUMNS} columns, found {columns}")]
    MalformedRow { line: usize, columns: usize },
    #[error("line {line}, column {column}: '{value}' is not a number")]
    NonNumericField {
        line: usize,
        column: usize,
        value: String,
    },
    #[error("line {line}: unit id and cycle must be positive integers")]
    InvalidIndex { line: usize },
    #[error("unit {unit}: cycle {cycle} appears more than once")]
    DuplicateCycle { unit: u32, cycle: u32 },
    #[error("unit {unit}: cycle {cycle} is missing")]
    MissingCycle { unit: u32, cycle: u32 },
    #[error("no data")]
    EmptyInput,
    #[error("RUL denominator must be positive and finite, got {0}")]
    InvalidDenominator(f64),
    #[error("window length must be at least 1")]
    InvalidWindow,
    #[error("validation fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("normalizer file: {0}")]
    BadStatsFile(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub unit_id: u32,
    pub cycle: u32,
    pub settings: [f64; SETTINGS],
    pub sensors: [f64; SENSORS],
}

impl RawRecord {
    pub fn features(&self) -> [f64; FEATURES] {
        let mut out = [0.0; FEATURES];
        out[..SETTINGS].copy_from_slice(&self.settings);
        out[SETTINGS..].copy_from_slice(&self.sensors);
        out
    }
}

/// Parses whitespace-separated CMAPSS rows. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn parse_cmapss(text: &str) -> Result<Vec<RawRecord>, DataError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != COLUMNS {
            return Err(DataError::MalformedRow {
                line,
                columns: fields.len(),
            });
        }
        let mut values = [0.0; COLUMNS];
        for (column, (slot, field)) in values.iter_mut().zip(&fields).enumerate() {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::NonNumericField {
                    line,
                    column: column + 1,
                    value: field.to_string(),
                })?;
        }
        let index = |v: f64| -> Option<u32> {
            (v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as u32)
        };
        let (Some(unit_id), Some(cycle)) = (index(values[0]), index(values[1])) else {
            return Err(DataError::InvalidIndex { line });
        };
        let mut settings = [0.0; SETTINGS];
        settings.copy_from_slice(&values[2..2 + SETTINGS]);
        let mut sensors = [0.0; SENSORS];
        sensors.copy_from_slice(&values[2 + SETTINGS..]);
        records.push(RawRecord {
            unit_id,
            cycle,
            settings,
            sensors,
        });
    }
    Ok(records)
}

/// One engine's full run, cycle 1 at index 0.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineSeries {
    pub unit_id: u32,
    pub rows: Vec<[f64; FEATURES]>,
}

impl EngineSeries {
    pub fn total_cycles(&self) -> usize {
        self.rows.len()
    }
}

/// Groups records per unit (ascending unit id) and orders each by cycle.
/// Every unit must cover cycles `1..=T` exactly once.
pub fn group_by_engine(records: &[RawRecord]) -> Result<Vec<EngineSeries>, DataError> {
    if records.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut units: BTreeMap<u32, BTreeMap<u32, [f64; FEATURES]>> = BTreeMap::new();
    for r in records {
        let cycles = units.entry(r.unit_id).or_default();
        if cycles.insert(r.cycle, r.features()).is_some() {
            return Err(DataError::DuplicateCycle {
                unit: r.unit_id,
                cycle: r.cycle,
            });
        }
    }
    units
        .into_iter()
        .map(|(unit_id, cycles)| {
            let mut rows = Vec::with_capacity(cycles.len());
            for (expected, (cycle, features)) in (1u32..).zip(cycles) {
                if cycle != expected {
                    return Err(DataError::MissingCycle {
                        unit: unit_id,
                        cycle: expected,
                    });
                }
                rows.push(features);
            }
            Ok(EngineSeries { unit_id, rows })
        })
        .collect()
}

/// Per-feature training extrema plus the shared RUL scale.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationStats {
    pub min: [f64; FEATURES],
    pub max: [f64; FEATURES],
    pub rul_denominator: f64,
}

/// Fits min/max over every row of the training engines. The RUL
/// denominator is the longest training life minus one (at least 1).
pub fn fit_normalizer(train: &[EngineSeries]) -> Result<NormalizationStats, DataError> {
    let mut min = [f64::INFINITY; FEATURES];
    let mut max = [f64::NEG_INFINITY; FEATURES];
    let mut seen = false;
    for row in train.iter().flat_map(|s| &s.rows) {
        seen = true;
        for k in 0..FEATURES {
            min[k] = min[k].min(row[k]);
            max[k] = max[k].max(row[k]);
        }
    }
    if !seen {
        return Err(DataError::EmptyInput);
    }
    Ok(NormalizationStats {
        min,
        max,
        rul_denominator: default_rul_denominator(train),
    })
}

pub fn default_rul_denominator(train: &[EngineSeries]) -> f64 {
    let longest = train.iter().map(|s| s.total_cycles()).max().unwrap_or(0);
    longest.saturating_sub(1).max(1) as f64
}

impl NormalizationStats {
    /// Min-max scaling; constant features map to 0. Values outside the
    /// training range are not clamped.
    pub fn normalize(&self, row: &[f64; FEATURES]) -> [f64; FEATURES] {
        let mut out = [0.0; FEATURES];
        for k in 0..FEATURES {
            let span = self.max[k] - self.min[k];
            out[k] = if span > 0.0 {
                (row[k] - self.min[k]) / span
            } else {
                0.0
            };
        }
        out
    }

    /// `key=value` text, floats in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rul_denominator={:?}", self.rul_denominator);
        let _ = writeln!(s, "n_features={FEATURES}");
        for k in 0..FEATURES {
            let _ = writeln!(s, "feature.{k}={:?},{:?}", self.min[k], self.max[k]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DataError> {
        let bad = |msg: String| DataError::BadStatsFile(msg);
        let mut denominator = None;
        let mut min = [f64::NAN; FEATURES];
        let mut max = [f64::NAN; FEATURES];
        let mut filled = [false; FEATURES];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got '{line}'")))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(format!("bad number '{v}'")));
            match key.trim() {
                "rul_denominator" => denominator = Some(num(value)?),
                "n_features" => {
                    if value.trim() != FEATURES.to_string() {
                        return Err(bad(format!("expected {FEATURES} features, found {value}")));
                    }
                }
                k if k.starts_with("feature.") => {
                    let idx: usize = k["feature.".len()..]
                        .parse()
                        .ok()
                        .filter(|&i| i < FEATURES)
                        .ok_or_else(|| bad(format!("bad feature key '{k}'")))?;
                    let (lo, hi) = value
                        .split_once(',')
                        .ok_or_else(|| bad(format!("expected min,max for {k}")))?;
                    min[idx] = num(lo)?;
                    max[idx] = num(hi)?;
                    filled[idx] = true;
                }
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        if let Some(k) = filled.iter().position(|f| !f) {
            return Err(bad(format!("feature.{k} missing")));
        }
        if let Some(k) = (0..FEATURES).find(|&k| max[k] < min[k]) {
            return Err(bad(format!("feature.{k} has max < min")));
        }
        let rul_denominator = denominator.ok_or_else(|| bad("rul_denominator missing".into()))?;
        if !(rul_denominator > 0.0 && rul_denominator.is_finite()) {
            return Err(DataError::InvalidDenominator(rul_denominator));
        }
        Ok(Self {
            min,
            max,
            rul_denominator,
        })
    }
}

/// Normalized RUL per cycle: `(T - t) / denominator` for `t = 1..=T`.
pub fn compute_rul_targets(series: &EngineSeries, rul_denominator: f64) -> Result<Vec<f64>, DataError> {
    if !(rul_denominator > 0.0 && rul_denominator.is_finite()) {
        return Err(DataError::InvalidDenominator(rul_denominator));
    }
    let total = series.total_cycles();
    Ok((1..=total)
        .map(|t| (total - t) as f64 / rul_denominator)
        .collect())
}

/// Fixed-length input windows paired with normalized RUL targets.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub sequences: Vec<Mat>,
    pub targets: Vec<f64>,
    pub window_len: usize,
    pub n_features: usize,
    pub rul_denominator: f64,
}

impl WindowedDataset {
    pub fn empty(window_len: usize, n_features: usize, rul_denominator: f64) -> Self {
        Self {
            sequences: Vec::new(),
            targets: Vec::new(),
            window_len,
            n_features,
            rul_denominator,
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn push(&mut self, sequence: Mat, target: f64) {
        debug_assert_eq!(sequence.shape(), (self.window_len, self.n_features));
        self.sequences.push(sequence);
        self.targets.push(target);
    }

    pub fn extend(&mut self, other: WindowedDataset) {
        self.sequences.extend(other.sequences);
        self.targets.extend(other.targets);
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            ..Self::empty(self.window_len, self.n_features, self.rul_denominator)
        }
    }
}

/// Slides a window over one engine. The window ending at cycle `t` is
/// labelled with the normalized RUL at `t`; engines shorter than the
/// window contribute nothing.
pub fn window(
    series: &EngineSeries,
    stats: &NormalizationStats,
    window_len: usize,
    rul_denominator: f64,
) -> Result<WindowedDataset, DataError> {
    if window_len == 0 {
        return Err(DataError::InvalidWindow);
    }
    let targets = compute_rul_targets(series, rul_denominator)?;
    let mut out = WindowedDataset::empty(window_len, FEATURES, rul_denominator);
    let total = series.total_cycles();
    if total < window_len {
        return Ok(out);
    }
    let normalized: Vec<[f64; FEATURES]> = series.rows.iter().map(|r| stats.normalize(r)).collect();
    for end in window_len..=total {
        let seq = Mat::from_rows(&normalized[end - window_len..end]).expect("rows have equal width");
        out.push(seq, targets[end - 1]);
    }
    Ok(out)
}

/// Windows every engine with the denominator stored in `stats`.
pub fn build_dataset(
    engines: &[EngineSeries],
    stats: &NormalizationStats,
    window_len: usize,
) -> Result<WindowedDataset, DataError> {
    let mut out = WindowedDataset::empty(window_len, FEATURES, stats.rul_denominator);
    if window_len == 0 {
        return Err(DataError::InvalidWindow);
    }
    for engine in engines {
        out.extend(window(engine, stats, window_len, stats.rul_denominator)?);
    }
    Ok(out)
}

/// Seeded shuffle then split into `ceil(n * (1 - f))` training and the
/// remaining validation sequences.
pub fn train_val_split(
    dataset: &WindowedDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(WindowedDataset, WindowedDataset), DataError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DataError::InvalidFraction(val_fraction));
    }
    if dataset.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let n = dataset.len();
    // ceil(n (1 - f)) == n - floor(n f); the slack absorbs representation error in f.
    let n_val = ((n as f64) * val_fraction + 1e-9).floor() as usize;
    let n_train = n - n_val.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((dataset.select(&order[..n_train]), dataset.select(&order[n_train..])))
}
