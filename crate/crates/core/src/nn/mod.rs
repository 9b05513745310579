//! Recurrent and dense layer math with hand-written backpropagation.
//!
//! Every parameter container implements [`ParamSet`], which exposes its
//! tensors as flat slices in a fixed order. The optimizer, the model file
//! codec and the gradient checker all walk parameters through that view.

mod adam;
mod dense;
mod gru;
mod loss;
mod lstm;
mod mat;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use dense::{dense_relu_backward, dense_relu_forward, DenseCache, DenseParams};
pub use gru::{gru_backward, gru_forward, GruCache, GruParams};
pub use loss::{loss, LossKind};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmParams};
pub use mat::Mat;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("prediction and target lengths differ ({predictions} vs {targets})")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: usize },
    #[error("invalid learning rate {0}")]
    InvalidLearningRate(f64),
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
}

/// A container of trainable tensors with a stable traversal order.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Weights of one recurrent gate: input projection, recurrent projection, bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

impl Gate {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: Mat::zeros(hidden_dim, input_dim),
            u: Mat::zeros(hidden_dim, hidden_dim),
            b: vec![0.0; hidden_dim],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for both projections.
    pub(crate) fn random<R: Rng>(rng: &mut R, input_dim: usize, hidden_dim: usize, bias: f64) -> Self {
        let mut gate = Self::zeros(input_dim, hidden_dim);
        fill_uniform(rng, gate.w.as_mut_slice(), input_dim);
        fill_uniform(rng, gate.u.as_mut_slice(), hidden_dim);
        gate.b.fill(bias);
        gate
    }

    /// `out = W x + U h + b`
    fn preactivation(&self, x: &[f64], h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
        self.w.mul_vec_acc(x, out);
        self.u.mul_vec_acc(h, out);
    }

    /// Accumulates the parameter gradient of a gate whose pre-activation
    /// gradient is `da`, given the step input and recurrent input.
    fn accumulate(&mut self, da: &[f64], x: &[f64], h: &[f64]) {
        self.w.add_outer(da, x);
        self.u.add_outer(da, h);
        for (b, d) in self.b.iter_mut().zip(da) {
            *b += d;
        }
    }

    fn check(&self, input_dim: usize, hidden_dim: usize) -> Result<(), NnError> {
        let ok = self.w.shape() == (hidden_dim, input_dim)
            && self.u.shape() == (hidden_dim, hidden_dim)
            && self.b.len() == hidden_dim;
        if ok {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch {
                expected: format!("gate W {hidden_dim}x{input_dim}, U {hidden_dim}x{hidden_dim}, b {hidden_dim}"),
                found: format!(
                    "W {:?}, U {:?}, b {}",
                    self.w.shape(),
                    self.u.shape(),
                    self.b.len()
                ),
            })
        }
    }

    fn tensors(&self) -> [&[f64]; 3] {
        [self.w.as_slice(), self.u.as_slice(), &self.b]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [self.w.as_mut_slice(), self.u.as_mut_slice(), &mut self.b]
    }
}

pub(crate) fn fill_uniform<R: Rng>(rng: &mut R, values: &mut [f64], fan_in: usize) {
    let k = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = rng.random_range(-k..=k);
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_sequence(seq: &Mat, input_dim: usize) -> Result<(), NnError> {
    if seq.rows() == 0 || seq.cols() != input_dim {
        return Err(NnError::ShapeMismatch {
            expected: format!("non-empty T x {input_dim} sequence"),
            found: format!("{}x{}", seq.rows(), seq.cols()),
        });
    }
    Ok(())
}
