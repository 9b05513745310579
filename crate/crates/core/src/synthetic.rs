//! Generated run-to-failure fleets in CMAPSS layout, for demos and tests.
//!
//! Each informative sensor drifts linearly with consumed life and carries
//! Gaussian noise; a handful of sensors stay constant, as several do in the
//! real turbofan data.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{RawRecord, SENSORS, SETTINGS};

/// Sensor indices that never change.
pub const CONSTANT_SENSORS: [usize; 5] = [0, 4, 9, 15, 17];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFleet {
    pub engines: usize,
    pub min_life: usize,
    pub max_life: usize,
    pub noise_sigma: f64,
    /// Range of the total drift of an informative sensor over `max_life`
    /// cycles; the sign is random per sensor.
    pub drift: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticFleet {
    fn default() -> Self {
        Self {
            engines: 20,
            min_life: 60,
            max_life: 120,
            noise_sigma: 0.02,
            drift: (0.01, 0.04),
            seed: 7,
        }
    }
}

impl SyntheticFleet {
    pub fn records(&self) -> Vec<RawRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sigma).expect("finite sigma");
        let base: Vec<f64> = (0..SENSORS).map(|_| rng.random_range(0.0..1.0)).collect();
        let slope: Vec<f64> = (0..SENSORS)
            .map(|k| {
                if CONSTANT_SENSORS.contains(&k) {
                    0.0
                } else {
                    let mag = rng.random_range(self.drift.0..self.drift.1);
                    if rng.random_bool(0.5) { mag } else { -mag }
                }
            })
            .collect();

        let mut out = Vec::new();
        for unit in 1..=self.engines {
            let life = rng.random_range(self.min_life..=self.max_life);
            for cycle in 1..=life {
                // Fraction of the longest possible life already consumed.
                let wear = 1.0 - (life - cycle) as f64 / self.max_life as f64;
                let mut settings = [0.0; SETTINGS];
                for s in &mut settings {
                    *s = noise.sample(&mut rng) * 0.1;
                }
                let mut sensors = [0.0; SENSORS];
                for (k, v) in sensors.iter_mut().enumerate() {
                    *v = if CONSTANT_SENSORS.contains(&k) {
                        base[k]
                    } else {
                        base[k] + slope[k] * wear + noise.sample(&mut rng)
                    };
                }
                out.push(RawRecord {
                    unit_id: unit as u32,
                    cycle: cycle as u32,
                    settings,
                    sensors,
                });
            }
        }
        out
    }

    /// The fleet as whitespace-separated CMAPSS text.
    pub fn to_text(&self) -> String {
        records_to_text(&self.records())
    }
}

pub fn records_to_text(records: &[RawRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(s, "{} {}", r.unit_id, r.cycle);
        for v in r.settings.iter().chain(&r.sensors) {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}
