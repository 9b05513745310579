use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Model, ModelError};
use crate::data::WindowedDataset;
use crate::nn::{loss, LossKind};

/// Hyper-parameters of one training epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub loss: LossKind,
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, shuffle_seed: u64) -> Self {
        Self {
            learning_rate,
            batch_size,
            loss: LossKind::Mae,
            shuffle_seed,
        }
    }
}

/// Training-set errors of one epoch, averaged over every prediction made
/// while stepping through the batches.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainMetrics {
    pub mse: f64,
    pub mae: f64,
    pub batch_sizes: Vec<usize>,
}

/// One row of the per-epoch table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mse: f64,
    pub train_mae: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

fn check_dataset(model: &Model, data: &WindowedDataset) -> Result<(), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let expected = (model.spec.window_len, model.spec.n_features);
    let found = (data.window_len, data.n_features);
    if expected != found {
        return Err(ModelError::DatasetShape { expected, found });
    }
    Ok(())
}

/// One pass over `train` in mini-batches.
///
/// The order is shuffled with `cfg.shuffle_seed + epoch`; the final batch
/// may be short. Reported errors come from each batch's forward pass,
/// i.e. before that batch's update is applied.
pub fn train_epoch(
    model: &mut Model,
    train: &WindowedDataset,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<TrainMetrics, ModelError> {
    check_dataset(model, train)?;
    if cfg.batch_size == 0 {
        return Err(ModelError::InvalidSpec("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(
        cfg.shuffle_seed.wrapping_add(epoch as u64),
    ));

    let mut grads = model.zero_grads();
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut batch_sizes = Vec::with_capacity(order.len().div_ceil(cfg.batch_size));
    let mut caches = Vec::with_capacity(cfg.batch_size);
    let mut preds = Vec::with_capacity(cfg.batch_size);
    let mut targets = Vec::with_capacity(cfg.batch_size);

    for batch in order.chunks(cfg.batch_size) {
        caches.clear();
        preds.clear();
        targets.clear();
        for &i in batch {
            let cache = model.forward(&train.sequences[i])?;
            preds.push(cache.prediction());
            targets.push(train.targets[i]);
            caches.push(cache);
        }
        for (p, y) in preds.iter().zip(&targets) {
            let r = p - y;
            sq_sum += r * r;
            abs_sum += r.abs();
        }

        let (_, d_preds) = loss(cfg.loss, &preds, &targets)?;
        grads.clear();
        for (cache, &d) in caches.iter().zip(&d_preds) {
            model.backward(cache, d, &mut grads)?;
        }
        model.apply_gradients(&grads, cfg.learning_rate)?;
        batch_sizes.push(batch.len());
    }

    let n = train.len() as f64;
    Ok(TrainMetrics {
        mse: sq_sum / n,
        mae: abs_sum / n,
        batch_sizes,
    })
}

/// `(mse, mae)` over every sequence; read-only.
pub fn evaluate(model: &Model, data: &WindowedDataset) -> Result<(f64, f64), ModelError> {
    check_dataset(model, data)?;
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    for (seq, &y) in data.sequences.iter().zip(&data.targets) {
        let r = model.predict(seq)? - y;
        sq_sum += r * r;
        abs_sum += r.abs();
    }
    let n = data.len() as f64;
    Ok((sq_sum / n, abs_sum / n))
}

/// Trains for `epochs` epochs, validating after each one. Epoch numbers in
/// the result start at 1.
pub fn fit(
    model: &mut Model,
    train: &WindowedDataset,
    val: &WindowedDataset,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<Vec<EpochMetrics>, ModelError> {
    check_dataset(model, val)?;
    (0..epochs)
        .map(|epoch| {
            let tm = train_epoch(model, train, cfg, epoch)?;
            let (val_mse, val_mae) = evaluate(model, val)?;
            Ok(EpochMetrics {
                epoch: epoch + 1,
                train_mse: tm.mse,
                train_mae: tm.mae,
                val_mse,
                val_mae,
            })
        })
        .collect()
}
