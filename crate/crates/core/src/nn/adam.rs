use super::NnError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Moment estimates for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed moments shaped after `tensor_lens`.
    pub fn new(tensor_lens: &[usize]) -> Self {
        Self {
            m: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// One bias-corrected Adam update.
///
/// Nothing is modified when a shape check fails or any gradient is not
/// finite. A learning rate of 0 advances the moments but leaves the
/// parameters untouched.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    lr: f64,
) -> Result<(), NnError> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(NnError::InvalidLearningRate(lr));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::ShapeMismatch {
            expected: format!("{} tensors", state.m.len()),
            found: format!("{} params, {} grads", params.len(), grads.len()),
        });
    }
    for (k, ((p, g), m)) in params.iter().zip(grads).zip(&state.m).enumerate() {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(NnError::ShapeMismatch {
                expected: format!("tensor {k} of length {}", m.len()),
                found: format!("params {}, grads {}", p.len(), g.len()),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteGradient { tensor: k });
        }
    }

    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
