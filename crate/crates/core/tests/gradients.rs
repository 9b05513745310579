mod common;

use common::*;
use rul_core::model::{build_model, CellType, ModelSpec};
use rul_core::nn::{Mat, ParamSet};

fn check(cell: CellType, seed: u64, cases: usize) {
    let mut rng = rng(seed);
    for case in 0..cases {
        let c = random_grad_case(&mut rng, cell);
        let analytic = analytic_gradient(&c.model, &c.seqs, &c.targets);
        let numeric = numeric_gradient(&c.model, &c.seqs, &c.targets);
        let err = max_relative_error(&analytic, &numeric);
        assert!(
            err <= 1e-4,
            "{cell} case {case} ({:?}, T={}): relative error {err:e}",
            c.model.spec.hidden_dims,
            c.model.spec.window_len
        );
    }
}

#[test]
fn lstm_matches_finite_differences() {
    check(CellType::Lstm, 101, 15);
}

#[test]
fn gru_matches_finite_differences() {
    check(CellType::Gru, 202, 15);
}

#[test]
fn deeper_stack_matches_finite_differences() {
    for cell in [CellType::Lstm, CellType::Gru] {
        let spec = ModelSpec {
            hidden_dims: vec![3, 4, 2],
            window_len: 5,
            n_features: 2,
            ..ModelSpec::new(cell, 9)
        };
        let model = build_model(&spec).unwrap();
        let seqs: Vec<Mat> = (0..2)
            .map(|k| Mat::from_vec(5, 2, (0..10).map(|i| ((i * 7 + k * 3) % 11) as f64 / 11.0 - 0.4).collect()).unwrap())
            .collect();
        let targets = [0.2, 0.9];
        assert!(seqs.iter().all(|s| model.predict(s).unwrap() > 1e-3));
        let err = max_relative_error(
            &analytic_gradient(&model, &seqs, &targets),
            &numeric_gradient(&model, &seqs, &targets),
        );
        assert!(err <= 1e-4, "{cell}: {err:e}");
        assert_eq!(model.param_count(), model.tensors().iter().map(|t| t.len()).sum::<usize>());
    }
}
