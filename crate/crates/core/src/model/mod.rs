//! Stacked recurrent regressor: recurrent layers followed by a single
//! ReLU output unit, trained with Adam.

mod codec;
mod train;

pub use codec::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_FORMAT_VERSION};
pub use train::{evaluate, fit, train_epoch, EpochMetrics, TrainConfig, TrainMetrics};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{DEFAULT_WINDOW_LEN, FEATURES};
use crate::nn::{
    adam_step, dense_relu_backward, dense_relu_forward, gru_backward, gru_forward, lstm_backward,
    lstm_forward, AdamState, DenseCache, DenseParams, GruCache, GruParams, LstmCache, LstmParams,
    Mat, NnError, ParamSet,
};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Initial bias of the ReLU output unit. At zero the unit is dead from the
/// start whenever `w . h` happens to be negative for every input, which is
/// common because freshly initialized recurrent states barely vary.
pub const OUTPUT_BIAS_INIT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset windows are {found:?}, model expects {expected:?}")]
    DatasetShape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellType {
    Lstm,
    Gru,
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellType::Lstm => "lstm",
            CellType::Gru => "gru",
        })
    }
}

impl FromStr for CellType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellType::Lstm),
            "gru" => Ok(CellType::Gru),
            other => Err(format!("unknown cell type '{other}' (expected lstm or gru)")),
        }
    }
}

/// Architecture and initialization seed. Every recurrent layer but the
/// last returns full sequences; the last feeds its final state to the
/// dense output unit.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub cell_type: CellType,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub window_len: usize,
    pub n_features: usize,
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn new(cell_type: CellType, init_seed: u64) -> Self {
        Self {
            cell_type,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            output_dim: 1,
            window_len: DEFAULT_WINDOW_LEN,
            n_features: FEATURES,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dims.is_empty() {
            return Err(ModelError::InvalidSpec("at least one recurrent layer is required".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(ModelError::InvalidSpec("hidden widths must be positive".into()));
        }
        if self.output_dim != 1 {
            return Err(ModelError::InvalidSpec(format!(
                "output width must be 1, got {}",
                self.output_dim
            )));
        }
        if self.window_len == 0 || self.n_features == 0 {
            return Err(ModelError::InvalidSpec("window length and feature count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RecurrentLayer {
    Lstm(LstmParams),
    Gru(GruParams),
}

#[derive(Clone, Debug)]
enum LayerCache {
    Lstm(LstmCache),
    Gru(GruCache),
}

impl RecurrentLayer {
    fn zeros(cell: CellType, input_dim: usize, hidden_dim: usize) -> Self {
        match cell {
            CellType::Lstm => Self::Lstm(LstmParams::zeros(input_dim, hidden_dim)),
            CellType::Gru => Self::Gru(GruParams::zeros(input_dim, hidden_dim)),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Self::Lstm(p) => Self::Lstm(LstmParams::zeros(p.input_dim, p.hidden_dim)),
            Self::Gru(p) => Self::Gru(GruParams::zeros(p.input_dim, p.hidden_dim)),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Lstm(p) => p.input_dim,
            Self::Gru(p) => p.input_dim,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            Self::Lstm(p) => p.hidden_dim,
            Self::Gru(p) => p.hidden_dim,
        }
    }

    fn forward(&self, seq: &Mat, return_sequences: bool) -> Result<(Mat, LayerCache), NnError> {
        Ok(match self {
            Self::Lstm(p) => {
                let (out, cache) = lstm_forward(p, seq, return_sequences)?;
                (out, LayerCache::Lstm(cache))
            }
            Self::Gru(p) => {
                let (out, cache) = gru_forward(p, seq, return_sequences)?;
                (out, LayerCache::Gru(cache))
            }
        })
    }

    fn backward(&self, cache: &LayerCache, d_out: &Mat, grads: &mut RecurrentLayer) -> Result<Mat, NnError> {
        match (self, cache, grads) {
            (Self::Lstm(p), LayerCache::Lstm(c), Self::Lstm(g)) => lstm_backward(p, c, d_out, g),
            (Self::Gru(p), LayerCache::Gru(c), Self::Gru(g)) => gru_backward(p, c, d_out, g),
            _ => Err(NnError::StaleCache),
        }
    }
}

impl ParamSet for RecurrentLayer {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Self::Lstm(p) => p.tensors(),
            Self::Gru(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Self::Lstm(p) => p.tensors_mut(),
            Self::Gru(p) => p.tensors_mut(),
        }
    }
}

/// Parameters plus optimizer state. `Clone` is a deep copy, used to fork
/// identical individuals.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<RecurrentLayer>,
    pub dense: DenseParams,
    pub adam: AdamState,
    /// Bumped on every parameter update; ties forward caches to the
    /// parameters that produced them.
    version: u64,
}

/// Gradient buffers mirroring a model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<RecurrentLayer>,
    pub dense: DenseParams,
}

impl ParamSet for ModelGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        out.extend(self.dense.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        out.extend(self.dense.tensors_mut());
        out
    }
}

impl ModelGrads {
    pub fn clear(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

/// Activations of one forward pass, consumed by [`Model::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    layers: Vec<LayerCache>,
    dense: DenseCache,
    prediction: f64,
}

impl ForwardCache {
    pub fn prediction(&self) -> f64 {
        self.prediction
    }
}

impl ParamSet for Model {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.layers.iter().flat_map(|l| l.tensors()).collect();
        out.extend(self.dense.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        out.extend(self.dense.tensors_mut());
        out
    }
}

/// Deterministically initialized model with fresh optimizer state.
pub fn build_model(spec: &ModelSpec) -> Result<Model, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    let mut input_dim = spec.n_features;
    let mut layers = Vec::with_capacity(spec.hidden_dims.len());
    for &hidden in &spec.hidden_dims {
        layers.push(match spec.cell_type {
            CellType::Lstm => RecurrentLayer::Lstm(LstmParams::random(&mut rng, input_dim, hidden)),
            CellType::Gru => RecurrentLayer::Gru(GruParams::random(&mut rng, input_dim, hidden)),
        });
        input_dim = hidden;
    }
    let dense = DenseParams::random(&mut rng, input_dim, spec.output_dim, OUTPUT_BIAS_INIT);
    Ok(Model::from_parts(spec.clone(), layers, dense))
}

/// Deep copy; training the copy never touches `model`.
pub fn clone_model(model: &Model) -> Model {
    model.clone()
}

impl Model {
    /// Assembles a model from explicit parameters with fresh Adam state.
    pub fn from_parts(spec: ModelSpec, layers: Vec<RecurrentLayer>, dense: DenseParams) -> Self {
        let mut model = Self {
            spec,
            layers,
            dense,
            adam: AdamState::new(&[]),
            version: 0,
        };
        let lens: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        model.adam = AdamState::new(&lens);
        model
    }

    /// A model of the given shape with every parameter set to zero.
    pub fn zeros(spec: &ModelSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut input_dim = spec.n_features;
        let mut layers = Vec::new();
        for &hidden in &spec.hidden_dims {
            layers.push(RecurrentLayer::zeros(spec.cell_type, input_dim, hidden));
            input_dim = hidden;
        }
        Ok(Self::from_parts(
            spec.clone(),
            layers,
            DenseParams::zeros(input_dim, spec.output_dim),
        ))
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            layers: self.layers.iter().map(RecurrentLayer::zeros_like).collect(),
            dense: DenseParams::zeros(self.dense.in_dim(), self.dense.out_dim()),
        }
    }

    fn check_window(&self, seq: &Mat) -> Result<(), NnError> {
        let expected = (self.spec.window_len, self.spec.n_features);
        if seq.shape() != expected {
            return Err(NnError::ShapeMismatch {
                expected: format!("{}x{} window", expected.0, expected.1),
                found: format!("{}x{}", seq.rows(), seq.cols()),
            });
        }
        Ok(())
    }

    pub fn forward(&self, seq: &Mat) -> Result<ForwardCache, NnError> {
        self.check_window(seq)?;
        let last = self.layers.len() - 1;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut activ = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = activ.as_ref().unwrap_or(seq);
            let (out, cache) = layer.forward(input, k != last)?;
            caches.push(cache);
            activ = Some(out);
        }
        let final_state = activ.expect("at least one layer");
        let (out, dense) = dense_relu_forward(&self.dense, final_state.row(0))?;
        Ok(ForwardCache {
            version: self.version,
            layers: caches,
            dense,
            prediction: out[0],
        })
    }

    /// Normalized RUL estimate; never negative.
    pub fn predict(&self, seq: &Mat) -> Result<f64, NnError> {
        Ok(self.forward(seq)?.prediction)
    }

    /// Adds d(loss)/d(params) for one sample into `grads`, given the
    /// loss gradient with respect to that sample's prediction.
    pub fn backward(&self, cache: &ForwardCache, d_prediction: f64, grads: &mut ModelGrads) -> Result<(), NnError> {
        if cache.version != self.version || cache.layers.len() != self.layers.len() {
            return Err(NnError::StaleCache);
        }
        let d_state = dense_relu_backward(&self.dense, &cache.dense, &[d_prediction], &mut grads.dense)?;
        let mut upstream = Mat::from_vec(1, d_state.len(), d_state)?;
        for ((layer, layer_cache), layer_grads) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            upstream = layer.backward(layer_cache, &upstream, layer_grads)?;
        }
        Ok(())
    }

    /// One Adam step on all parameters.
    pub fn apply_gradients(&mut self, grads: &ModelGrads, lr: f64) -> Result<(), NnError> {
        let Model {
            layers, dense, adam, ..
        } = self;
        let mut params: Vec<&mut [f64]> = layers.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        params.extend(dense.tensors_mut());
        adam_step(adam, &mut params, &grads.tensors(), lr)?;
        self.version += 1;
        Ok(())
    }

    pub fn cell_type(&self) -> CellType {
        self.spec.cell_type
    }
}
