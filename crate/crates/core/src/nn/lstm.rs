use rand::Rng;

use super::{check_sequence, sigmoid, Gate, Mat, NnError, ParamSet};

/// LSTM layer parameters.
///
/// Tensor order: input gate, forget gate, output gate, cell candidate; each
/// gate contributes `W` (hidden x input), `U` (hidden x hidden) and `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub input: Gate,
    pub forget: Gate,
    pub output: Gate,
    pub cell: Gate,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input: Gate::zeros(input_dim, hidden_dim),
            forget: Gate::zeros(input_dim, hidden_dim),
            output: Gate::zeros(input_dim, hidden_dim),
            cell: Gate::zeros(input_dim, hidden_dim),
            input_dim,
            hidden_dim,
        }
    }

    /// Uniform fan-in initialization with the forget-gate bias set to 1.
    pub fn random<R: Rng>(rng: &mut R, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input: Gate::random(rng, input_dim, hidden_dim, 0.0),
            forget: Gate::random(rng, input_dim, hidden_dim, 1.0),
            output: Gate::random(rng, input_dim, hidden_dim, 0.0),
            cell: Gate::random(rng, input_dim, hidden_dim, 0.0),
            input_dim,
            hidden_dim,
        }
    }

    pub fn check(&self) -> Result<(), NnError> {
        for gate in [&self.input, &self.forget, &self.output, &self.cell] {
            gate.check(self.input_dim, self.hidden_dim)?;
        }
        Ok(())
    }
}

impl ParamSet for LstmParams {
    fn tensors(&self) -> Vec<&[f64]> {
        [&self.input, &self.forget, &self.output, &self.cell]
            .into_iter()
            .flat_map(|g| g.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let Self {
            input,
            forget,
            output,
            cell,
            ..
        } = self;
        [input, forget, output, cell]
            .into_iter()
            .flat_map(|g| g.tensors_mut())
            .collect()
    }
}

/// Per-step activations recorded by [`lstm_forward`].
#[derive(Clone, Debug)]
pub struct LstmCache {
    xs: Mat,
    /// Row 0 is the zero initial state; row `t + 1` is the state after step `t`.
    hs: Mat,
    cs: Mat,
    i: Mat,
    f: Mat,
    o: Mat,
    g: Mat,
    tanh_c: Mat,
    return_sequences: bool,
}

impl LstmCache {
    pub fn steps(&self) -> usize {
        self.xs.rows()
    }
}

/// Runs the layer over `seq` (T x input_dim) from zero state.
///
/// Returns a T x hidden matrix when `return_sequences` is set, otherwise a
/// 1 x hidden matrix holding the final state.
pub fn lstm_forward(
    params: &LstmParams,
    seq: &Mat,
    return_sequences: bool,
) -> Result<(Mat, LstmCache), NnError> {
    params.check()?;
    check_sequence(seq, params.input_dim)?;
    let steps = seq.rows();
    let hidden = params.hidden_dim;

    let mut cache = LstmCache {
        xs: seq.clone(),
        hs: Mat::zeros(steps + 1, hidden),
        cs: Mat::zeros(steps + 1, hidden),
        i: Mat::zeros(steps, hidden),
        f: Mat::zeros(steps, hidden),
        o: Mat::zeros(steps, hidden),
        g: Mat::zeros(steps, hidden),
        tanh_c: Mat::zeros(steps, hidden),
        return_sequences,
    };

    let mut h_prev = vec![0.0; hidden];
    let mut c_prev = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for t in 0..steps {
        let x = seq.row(t);
        params.input.preactivation(x, &h_prev, cache.i.row_mut(t));
        params.forget.preactivation(x, &h_prev, cache.f.row_mut(t));
        params.output.preactivation(x, &h_prev, cache.o.row_mut(t));
        params.cell.preactivation(x, &h_prev, cache.g.row_mut(t));
        cache.i.row_mut(t).iter_mut().for_each(|v| *v = sigmoid(*v));
        cache.f.row_mut(t).iter_mut().for_each(|v| *v = sigmoid(*v));
        cache.o.row_mut(t).iter_mut().for_each(|v| *v = sigmoid(*v));
        cache.g.row_mut(t).iter_mut().for_each(|v| *v = v.tanh());

        let (i, f, o, g) = (cache.i.row(t), cache.f.row(t), cache.o.row(t), cache.g.row(t));
        let tanh_c = cache.tanh_c.row_mut(t);
        for k in 0..hidden {
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
        cache.hs.row_mut(t + 1).copy_from_slice(&h);
        cache.cs.row_mut(t + 1).copy_from_slice(&c);
        std::mem::swap(&mut h, &mut h_prev);
        std::mem::swap(&mut c, &mut c_prev);
    }

    let out = if return_sequences {
        Mat::from_vec(steps, hidden, cache.hs.as_slice()[hidden..].to_vec())?
    } else {
        Mat::from_vec(1, hidden, cache.hs.row(steps).to_vec())?
    };
    Ok((out, cache))
}

/// Backpropagates `d_out` (same shape as the forward output) through time.
///
/// Parameter gradients are added into `grads`; the gradient with respect to
/// the input sequence is returned.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    d_out: &Mat,
    grads: &mut LstmParams,
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
    let mut dc_next = vec![0.0; hidden];
    let mut dh = vec![0.0; hidden];
    let mut da_i = vec![0.0; hidden];
    let mut da_f = vec![0.0; hidden];
    let mut da_o = vec![0.0; hidden];
    let mut da_g = vec![0.0; hidden];

    for t in (0..steps).rev() {
        let upstream = if cache.return_sequences {
            Some(d_out.row(t))
        } else if t == steps - 1 {
            Some(d_out.row(0))
        } else {
            None
        };
        dh.copy_from_slice(&dh_next);
        if let Some(up) = upstream {
            for (a, b) in dh.iter_mut().zip(up) {
                *a += b;
            }
        }

        let (i, f, o, g) = (cache.i.row(t), cache.f.row(t), cache.o.row(t), cache.g.row(t));
        let tanh_c = cache.tanh_c.row(t);
        let c_prev = cache.cs.row(t);
        for k in 0..hidden {
            let dc = dh[k] * o[k] * (1.0 - tanh_c[k] * tanh_c[k]) + dc_next[k];
            da_o[k] = dh[k] * tanh_c[k] * o[k] * (1.0 - o[k]);
            da_i[k] = dc * g[k] * i[k] * (1.0 - i[k]);
            da_g[k] = dc * i[k] * (1.0 - g[k] * g[k]);
            da_f[k] = dc * c_prev[k] * f[k] * (1.0 - f[k]);
            dc_next[k] = dc * f[k];
        }

        let x = cache.xs.row(t);
        let h_prev = cache.hs.row(t);
        grads.input.accumulate(&da_i, x, h_prev);
        grads.forget.accumulate(&da_f, x, h_prev);
        grads.output.accumulate(&da_o, x, h_prev);
        grads.cell.accumulate(&da_g, x, h_prev);

        dh_next.fill(0.0);
        let dx_t = dx.row_mut(t);
        for (gate, da) in [
            (&params.input, &da_i),
            (&params.forget, &da_f),
            (&params.output, &da_o),
            (&params.cell, &da_g),
        ] {
            gate.w.mul_t_vec_acc(da, dx_t);
            gate.u.mul_t_vec_acc(da, &mut dh_next);
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn scalar_params(w: [f64; 4], u: [f64; 4], b: [f64; 4]) -> LstmParams {
        let mut p = LstmParams::zeros(1, 1);
        for (k, gate) in [&mut p.input, &mut p.forget, &mut p.output, &mut p.cell]
            .into_iter()
            .enumerate()
        {
            gate.w.set(0, 0, w[k]);
            gate.u.set(0, 0, u[k]);
            gate.b[0] = b[k];
        }
        p
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = LstmParams::zeros(3, 4);
        let seq = Mat::from_rows(&[[1.0, -2.0, 0.5], [0.3, 0.3, 0.3]]).unwrap();
        let (out, _) = lstm_forward(&p, &seq, true).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_step_matches_hand_evaluation() {
        let p = scalar_params([0.5, -0.3, 0.8, 1.2], [0.0; 4], [0.1, 0.2, -0.1, 0.05]);
        let x = 0.7;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.1);
        let o = s(0.8 * x - 0.1);
        let g = (1.2 * x + 0.05_f64).tanh();
        // c_prev = 0 so the forget gate drops out.
        let expected = o * (i * g).tanh();

        let seq = Mat::from_vec(1, 1, vec![x]).unwrap();
        let (out, _) = lstm_forward(&p, &seq, false).unwrap();
        assert!((out.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn scalar_gradients_match_chain_rule() {
        // One step from zero state: h = o * tanh(i * g), loss = h.
        let (wi, wo, wg) = (0.4, -0.6, 0.9);
        let (bi, bo, bg) = (0.1, 0.2, -0.3);
        let p = scalar_params([wi, 0.3, wo, wg], [0.7, 0.7, 0.7, 0.7], [bi, 0.5, bo, bg]);
        let x = 1.3;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(wi * x + bi);
        let o = s(wo * x + bo);
        let g = (wg * x + bg).tanh();
        let c = i * g;
        let tc = c.tanh();
        let dc = o * (1.0 - tc * tc);
        let d_wo = tc * o * (1.0 - o) * x;
        let d_wi = dc * g * i * (1.0 - i) * x;
        let d_wg = dc * i * (1.0 - g * g) * x;
        let d_x = tc * o * (1.0 - o) * wo + dc * g * i * (1.0 - i) * wi + dc * i * (1.0 - g * g) * wg;

        let seq = Mat::from_vec(1, 1, vec![x]).unwrap();
        let (_, cache) = lstm_forward(&p, &seq, false).unwrap();
        let mut grads = LstmParams::zeros(1, 1);
        let dx = lstm_backward(&p, &cache, &Mat::from_vec(1, 1, vec![1.0]).unwrap(), &mut grads).unwrap();

        assert!((grads.output.w.get(0, 0) - d_wo).abs() < 1e-14);
        assert!((grads.input.w.get(0, 0) - d_wi).abs() < 1e-14);
        assert!((grads.cell.w.get(0, 0) - d_wg).abs() < 1e-14);
        // c_prev = 0 and h_prev = 0: forget gate and recurrent weights get nothing.
        assert_eq!(grads.forget.w.get(0, 0), 0.0);
        assert_eq!(grads.input.u.get(0, 0), 0.0);
        assert!((dx.get(0, 0) - d_x).abs() < 1e-14);
    }

    #[test]
    fn sequence_flag_is_consistent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::random(&mut rng, 2, 3);
        let seq = Mat::from_rows(&[[0.1, 0.2], [0.3, -0.4], [0.9, 0.0]]).unwrap();
        let (all, _) = lstm_forward(&p, &seq, true).unwrap();
        let (last, _) = lstm_forward(&p, &seq, false).unwrap();
        assert_eq!(all.rows(), 3);
        assert_eq!(all.row(2), last.row(0));
    }

    #[test]
    fn wrong_input_width_rejected() {
        let p = LstmParams::zeros(3, 2);
        let seq = Mat::zeros(4, 2);
        assert!(matches!(lstm_forward(&p, &seq, true), Err(NnError::ShapeMismatch { .. })));
        assert!(lstm_forward(&p, &Mat::zeros(0, 3), true).is_err());
    }

}
