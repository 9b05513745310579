//! Test-only oracles. Nothing here calls into backward passes or the
//! windowing code it is used to check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rul_core::data::{build_dataset, fit_normalizer, group_by_engine, train_val_split, WindowedDataset, FEATURES};
use rul_core::model::{CellType, Model, ModelSpec};
use rul_core::nn::{LossKind, Mat, ParamSet};
use rul_core::synthetic::SyntheticFleet;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const FD_FLOOR: f64 = 1e-6;

/// Mean squared error of a batch computed from forward passes only.
pub fn batch_mse(model: &Model, seqs: &[Mat], targets: &[f64]) -> f64 {
    seqs.iter()
        .zip(targets)
        .map(|(s, y)| {
            let r = model.predict(s).unwrap() - y;
            r * r
        })
        .sum::<f64>()
        / seqs.len() as f64
}

/// Central-difference gradient of [`batch_mse`] for every parameter, in
/// `ParamSet` order.
pub fn numeric_gradient(model: &Model, seqs: &[Mat], targets: &[f64]) -> Vec<f64> {
    let mut probe = model.clone();
    let n: usize = model.param_count();
    let mut out = Vec::with_capacity(n);
    for flat in 0..n {
        let (t, i) = locate(&probe, flat);
        let orig = probe.tensors()[t][i];
        probe.tensors_mut()[t][i] = orig + FD_STEP;
        let plus = batch_mse(&probe, seqs, targets);
        probe.tensors_mut()[t][i] = orig - FD_STEP;
        let minus = batch_mse(&probe, seqs, targets);
        probe.tensors_mut()[t][i] = orig;
        out.push((plus - minus) / (2.0 * FD_STEP));
    }
    out
}

fn locate(model: &Model, mut flat: usize) -> (usize, usize) {
    for (t, tensor) in model.tensors().iter().enumerate() {
        if flat < tensor.len() {
            return (t, flat);
        }
        flat -= tensor.len();
    }
    unreachable!("index past last parameter")
}

/// Analytic gradient through the model's backward pass.
pub fn analytic_gradient(model: &Model, seqs: &[Mat], targets: &[f64]) -> Vec<f64> {
    let caches: Vec<_> = seqs.iter().map(|s| model.forward(s).unwrap()).collect();
    let preds: Vec<f64> = caches.iter().map(|c| c.prediction()).collect();
    let (_, d) = rul_core::nn::loss(LossKind::Mse, &preds, targets).unwrap();
    let mut grads = model.zero_grads();
    for (c, di) in caches.iter().zip(d) {
        model.backward(c, di, &mut grads).unwrap();
    }
    grads.tensors().concat()
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(FD_FLOOR))
        .fold(0.0, f64::max)
}

pub struct GradCase {
    pub model: Model,
    pub seqs: Vec<Mat>,
    pub targets: Vec<f64>,
}

/// A random small model and batch whose ReLU output sits clear of its kink,
/// so finite differences are valid.
pub fn random_grad_case(rng: &mut ChaCha8Rng, cell: CellType) -> GradCase {
    loop {
        let input_dim = rng.random_range(1..=4);
        let window_len = rng.random_range(1..=6);
        let hidden = vec![rng.random_range(1..=5), rng.random_range(1..=5)];
        let spec = ModelSpec {
            cell_type: cell,
            hidden_dims: hidden,
            output_dim: 1,
            window_len,
            n_features: input_dim,
            init_seed: rng.random(),
        };
        let mut model = rul_core::model::build_model(&spec).unwrap();
        // Larger weights than the default init so every gate is exercised.
        for t in model.tensors_mut() {
            for v in t.iter_mut() {
                *v *= 2.0;
            }
        }
        let seqs: Vec<Mat> = (0..3)
            .map(|_| {
                let data = (0..window_len * input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                Mat::from_vec(window_len, input_dim, data).unwrap()
            })
            .collect();
        let targets: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let clear_of_kink = seqs.iter().all(|s| model.predict(s).unwrap() > 1e-3);
        if clear_of_kink {
            return GradCase { model, seqs, targets };
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force count of length-`w` windows fully inside `1..=t`.
pub fn enumerate_windows(t: usize, w: usize) -> usize {
    let mut count = 0;
    for start in 1..=t {
        let end = start + w - 1;
        if end <= t {
            count += 1;
        }
    }
    count
}

pub struct Split {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
}

/// The desk-scale fleet: 20 engines, lives 60..=120, sigma 0.02.
pub fn synthetic_split(seed: u64) -> Split {
    let fleet = SyntheticFleet {
        seed,
        ..SyntheticFleet::default()
    };
    assert_eq!((fleet.engines, fleet.min_life, fleet.max_life), (20, 60, 120));
    assert_eq!(fleet.noise_sigma, 0.02);
    let series = group_by_engine(&fleet.records()).unwrap();
    let stats = fit_normalizer(&series).unwrap();
    let ds = build_dataset(&series, &stats, 20).unwrap();
    assert_eq!(ds.n_features, FEATURES);
    let (train, val) = train_val_split(&ds, 0.2, seed).unwrap();
    Split { train, val }
}
