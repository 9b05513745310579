use std::fmt;
use std::str::FromStr;

use super::NnError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    #[default]
    Mae,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(format!("unknown loss '{other}' (expected mse or mae)")),
        }
    }
}

/// Mean loss over a batch and its gradient with respect to each prediction.
///
/// The MAE subgradient is 0 where a prediction equals its target.
pub fn loss(kind: LossKind, predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
    if predictions.len() != targets.len() {
        return Err(NnError::LengthMismatch {
            predictions: predictions.len(),
            targets: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let n = predictions.len() as f64;
    let residuals = predictions.iter().zip(targets).map(|(p, y)| p - y);
    let (total, grad): (f64, Vec<f64>) = match kind {
        LossKind::Mse => residuals.fold((0.0, Vec::new()), |(s, mut g), r| {
            g.push(2.0 * r / n);
            (s + r * r, g)
        }),
        LossKind::Mae => residuals.fold((0.0, Vec::new()), |(s, mut g), r| {
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            g.push(sign / n);
            (s + r.abs(), g)
        }),
    };
    Ok((total / n, grad))
}
