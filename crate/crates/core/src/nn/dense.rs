use rand::Rng;

use super::{fill_uniform, Mat, NnError, ParamSet};

/// Fully connected layer followed by ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    /// out_dim x in_dim
    pub w: Mat,
    pub b: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: Mat::zeros(out_dim, in_dim),
            b: vec![0.0; out_dim],
        }
    }

    /// Uniform fan-in weights; every bias starts at `bias`.
    pub fn random<R: Rng>(rng: &mut R, in_dim: usize, out_dim: usize, bias: f64) -> Self {
        let mut p = Self::zeros(in_dim, out_dim);
        fill_uniform(rng, p.w.as_mut_slice(), in_dim);
        p.b.fill(bias);
        p
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }
}

impl ParamSet for DenseParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice(), &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), &mut self.b]
    }
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    x: Vec<f64>,
    pre: Vec<f64>,
}

/// `max(0, W x + b)`
pub fn dense_relu_forward(params: &DenseParams, x: &[f64]) -> Result<(Vec<f64>, DenseCache), NnError> {
    if x.len() != params.in_dim() || params.b.len() != params.out_dim() {
        return Err(NnError::ShapeMismatch {
            expected: format!("input of length {}", params.in_dim()),
            found: format!("length {}", x.len()),
        });
    }
    let mut pre = params.b.clone();
    params.w.mul_vec_acc(x, &mut pre);
    let out = pre.iter().map(|&v| v.max(0.0)).collect();
    Ok((
        out,
        DenseCache {
            x: x.to_vec(),
            pre,
        },
    ))
}

/// Accumulates into `grads` and returns the gradient with respect to the input.
/// The ReLU derivative is taken as 0 at a pre-activation of exactly 0.
pub fn dense_relu_backward(
    params: &DenseParams,
    cache: &DenseCache,
    d_out: &[f64],
    grads: &mut DenseParams,
) -> Result<Vec<f64>, NnError> {
    if d_out.len() != params.out_dim() || grads.w.shape() != params.w.shape() {
        return Err(NnError::ShapeMismatch {
            expected: format!("upstream gradient of length {}", params.out_dim()),
            found: format!("length {}", d_out.len()),
        });
    }
    let dz: Vec<f64> = d_out
        .iter()
        .zip(&cache.pre)
        .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
        .collect();
    grads.w.add_outer(&dz, &cache.x);
    grads.b.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
    let mut dx = vec![0.0; params.in_dim()];
    params.w.mul_t_vec_acc(&dz, &mut dx);
    Ok(dx)
}
