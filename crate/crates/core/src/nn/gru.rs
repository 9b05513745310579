use rand::Rng;

use super::{check_sequence, sigmoid, Gate, Mat, NnError, ParamSet};

/// GRU layer parameters.
///
/// Tensor order: update gate, reset gate, candidate; each as `W`, `U`, `b`.
/// The reset gate is applied to the previous state before the candidate's
/// recurrent projection.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub update: Gate,
    pub reset: Gate,
    pub candidate: Gate,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            update: Gate::zeros(input_dim, hidden_dim),
            reset: Gate::zeros(input_dim, hidden_dim),
            candidate: Gate::zeros(input_dim, hidden_dim),
            input_dim,
            hidden_dim,
        }
    }

    pub fn random<R: Rng>(rng: &mut R, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            update: Gate::random(rng, input_dim, hidden_dim, 0.0),
            reset: Gate::random(rng, input_dim, hidden_dim, 0.0),
            candidate: Gate::random(rng, input_dim, hidden_dim, 0.0),
            input_dim,
            hidden_dim,
        }
    }

    pub fn check(&self) -> Result<(), NnError> {
        for gate in [&self.update, &self.reset, &self.candidate] {
            gate.check(self.input_dim, self.hidden_dim)?;
        }
        Ok(())
    }
}

impl ParamSet for GruParams {
    fn tensors(&self) -> Vec<&[f64]> {
        [&self.update, &self.reset, &self.candidate]
            .into_iter()
            .flat_map(|g| g.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let Self {
            update,
            reset,
            candidate,
            ..
        } = self;
        [update, reset, candidate]
            .into_iter()
            .flat_map(|g| g.tensors_mut())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct GruCache {
    xs: Mat,
    hs: Mat,
    z: Mat,
    r: Mat,
    /// `r ⊙ h_prev` per step.
    rh: Mat,
    cand: Mat,
    return_sequences: bool,
}

impl GruCache {
    pub fn steps(&self) -> usize {
        self.xs.rows()
    }
}

pub fn gru_forward(
    params: &GruParams,
    seq: &Mat,
    return_sequences: bool,
) -> Result<(Mat, GruCache), NnError> {
    params.check()?;
    check_sequence(seq, params.input_dim)?;
    let steps = seq.rows();
    let hidden = params.hidden_dim;

    let mut cache = GruCache {
        xs: seq.clone(),
        hs: Mat::zeros(steps + 1, hidden),
        z: Mat::zeros(steps, hidden),
        r: Mat::zeros(steps, hidden),
        rh: Mat::zeros(steps, hidden),
        cand: Mat::zeros(steps, hidden),
        return_sequences,
    };

    let mut h = vec![0.0; hidden];
    for t in 0..steps {
        let x = seq.row(t);
        let h_prev = cache.hs.row(t).to_vec();
        params.update.preactivation(x, &h_prev, cache.z.row_mut(t));
        params.reset.preactivation(x, &h_prev, cache.r.row_mut(t));
        cache.z.row_mut(t).iter_mut().for_each(|v| *v = sigmoid(*v));
        cache.r.row_mut(t).iter_mut().for_each(|v| *v = sigmoid(*v));

        let rh = cache.rh.row_mut(t);
        for ((o, r), hp) in rh.iter_mut().zip(cache.r.row(t)).zip(&h_prev) {
            *o = r * hp;
        }
        params.candidate.preactivation(x, cache.rh.row(t), cache.cand.row_mut(t));
        cache.cand.row_mut(t).iter_mut().for_each(|v| *v = v.tanh());

        let (z, cand) = (cache.z.row(t), cache.cand.row(t));
        for k in 0..hidden {
            h[k] = (1.0 - z[k]) * h_prev[k] + z[k] * cand[k];
        }
        cache.hs.row_mut(t + 1).copy_from_slice(&h);
    }

    let out = if return_sequences {
        Mat::from_vec(steps, hidden, cache.hs.as_slice()[hidden..].to_vec())?
    } else {
        Mat::from_vec(1, hidden, cache.hs.row(steps).to_vec())?
    };
    Ok((out, cache))
}

/// BPTT counterpart of [`gru_forward`]; accumulates into `grads` and returns
/// the input-sequence gradient.
pub fn gru_backward(
    params: &GruParams,
    cache: &GruCache,
    d_out: &Mat,
    grads: &mut GruParams,
) -> Result<Mat, NnError> {
    let steps = cache.steps();
    let hidden = params.hidden_dim;
    let expected_rows = if cache.return_sequences { steps } else { 1 };
    if d_out.shape() != (expected_rows, hidden) {
        return Err(NnError::ShapeMismatch {
            expected: format!("{expected_rows}x{hidden} upstream gradient"),
            found: format!("{:?}", d_out.shape()),
        });
    }
    if grads.input_dim != params.input_dim || grads.hidden_dim != hidden {
        return Err(NnError::ShapeMismatch {
            expected: format!("gradient buffer {}->{}", params.input_dim, hidden),
            found: format!("{}->{}", grads.input_dim, grads.hidden_dim),
        });
    }

    let mut dx = Mat::zeros(steps, params.input_dim);
    let mut dh_next = vec![0.0; hidden];
    let mut dh = vec![0.0; hidden];
    let mut da_z = vec![0.0; hidden];
    let mut da_r = vec![0.0; hidden];
    let mut da_h = vec![0.0; hidden];
    let mut d_rh = vec![0.0; hidden];

    for t in (0..steps).rev() {
        dh.copy_from_slice(&dh_next);
        if cache.return_sequences {
            dh.iter_mut().zip(d_out.row(t)).for_each(|(a, b)| *a += b);
        } else if t == steps - 1 {
            dh.iter_mut().zip(d_out.row(0)).for_each(|(a, b)| *a += b);
        }

        let (z, r, cand) = (cache.z.row(t), cache.r.row(t), cache.cand.row(t));
        let h_prev = cache.hs.row(t);
        for k in 0..hidden {
            da_z[k] = dh[k] * (cand[k] - h_prev[k]) * z[k] * (1.0 - z[k]);
            da_h[k] = dh[k] * z[k] * (1.0 - cand[k] * cand[k]);
            dh_next[k] = dh[k] * (1.0 - z[k]);
        }

        d_rh.fill(0.0);
        params.candidate.u.mul_t_vec_acc(&da_h, &mut d_rh);
        for k in 0..hidden {
            da_r[k] = d_rh[k] * h_prev[k] * r[k] * (1.0 - r[k]);
            dh_next[k] += d_rh[k] * r[k];
        }

        let x = cache.xs.row(t);
        grads.update.accumulate(&da_z, x, h_prev);
        grads.reset.accumulate(&da_r, x, h_prev);
        grads.candidate.accumulate(&da_h, x, cache.rh.row(t));

        params.update.u.mul_t_vec_acc(&da_z, &mut dh_next);
        params.reset.u.mul_t_vec_acc(&da_r, &mut dh_next);
        let dx_t = dx.row_mut(t);
        params.update.w.mul_t_vec_acc(&da_z, dx_t);
        params.reset.w.mul_t_vec_acc(&da_r, dx_t);
        params.candidate.w.mul_t_vec_acc(&da_h, dx_t);
    }
    Ok(dx)
}
