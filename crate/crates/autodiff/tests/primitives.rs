use gt_autodiff::gru::{gru_cell, GruParams};
use gt_autodiff::{grad_check, grad_check_params, Error, GradCheckConfig, Matrix, ParamStore, Tape};
use proptest::prelude::*;

#[path = "support/primitive_checks.rs"]
mod primitive_checks;
use primitive_checks::{cfg, contract, random};

fn check_all_primitives(seed: u64) {
    for (name, report) in primitive_checks::primitive_reports(seed) {
        assert!(
            report.passed,
            "{name}: max rel err {} at {:?}",
            report.max_rel_err, report.worst
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn every_primitive_passes_grad_check(seed in 0u64..1 << 62) {
        check_all_primitives(seed);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), r in 1usize..6, c in 1usize..40) {
        let tape = Tape::<f32>::new(false);
        let x = tape.leaf(random(r, c, seed).mapv(|v| (v * 20.0) as f32), false);
        let y = tape.softmax(x);
        for row in tape.value(y).rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_standardizes_rows(seed in any::<u64>(), r in 1usize..6, c in 2usize..64) {
        let tape = Tape::<f64>::new(false);
        let x = tape.leaf(random(r, c, seed).mapv(|v| 3.0 * v + 1.0), false);
        let y = tape.normalize(x, 1e-12);
        for row in tape.value(y).rows() {
            let mean = row.sum() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn softmax_cross_entropy_composite_is_tight() {
    let logits = random(4, 7, 3);
    let report = grad_check(
        |t, x| {
            let p = t.softmax(x[0]);
            let picked = t.pick(p, &[1, 0, 6, 3])?;
            let logp = t.ln_clamp(picked, 1e-300);
            Ok(t.scale(t.mean(logp), -1.0))
        },
        &[logits],
        &cfg(1e-6),
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn layer_norm_grad_check() {
    let x = random(3, 16, 11);
    let report = grad_check(|t, v| contract(t, t.normalize(v[0], 1e-6), 1), &[x], &cfg(1e-5)).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn identity_has_zero_error() {
    let x = random(2, 3, 1);
    let report = grad_check(|t, v| Ok(t.sum(v[0])), &[x], &cfg(1e-12)).unwrap();
    assert!(report.max_rel_err < 1e-9, "{report:?}");
}

#[test]
fn dropout_zero_is_identity_and_eval_is_identity() {
    let tape = Tape::<f64>::new(true);
    let x = tape.leaf(random(3, 4, 2), false);
    let y = tape.dropout(x, 0.0, 1).unwrap();
    assert_eq!(*tape.value(x), *tape.value(y));

    let eval = Tape::<f64>::new(false);
    let x = eval.leaf(random(3, 4, 2), false);
    let y = eval.dropout(x, 0.5, 1).unwrap();
    assert_eq!(*eval.value(x), *eval.value(y));
}

#[test]
fn dropout_scales_survivors_and_is_seeded() {
    let tape = Tape::<f64>::new(true);
    let x = tape.leaf(Matrix::ones((50, 40)), false);
    let a = tape.dropout(x, 0.25, 9).unwrap();
    let b = tape.dropout(x, 0.25, 9).unwrap();
    assert_eq!(*tape.value(a), *tape.value(b));
    let va = tape.value(a);
    let kept = va.iter().filter(|&&v| v != 0.0).count();
    assert!(va.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
    let frac = kept as f64 / 2000.0;
    assert!((frac - 0.75).abs() < 0.05, "{frac}");
    assert!(tape.dropout(x, 1.0, 0).is_err());
}

#[test]
fn matmul_shape_algebra_and_mismatch_message() {
    let tape = Tape::<f32>::new(false);
    let a = tape.leaf(Matrix::zeros((2, 3)), false);
    let b = tape.leaf(Matrix::zeros((3, 4)), false);
    assert_eq!(tape.shape(tape.matmul(a, b).unwrap()), (2, 4));
    let err = tape.matmul(b, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[3, 4]"), "{err}");
}

#[test]
fn backward_of_sum_and_dot() {
    let tape = Tape::<f64>::new(false);
    let x = tape.leaf(random(1, 5, 4), true);
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 1.0));

    let tape = Tape::<f64>::new(false);
    let xv = random(1, 5, 4);
    let x = tape.leaf(xv.clone(), true);
    let d = tape.matmul_t(x, x).unwrap();
    tape.backward(d).unwrap();
    assert_eq!(tape.grad(x).unwrap(), xv * 2.0);
}

#[test]
fn repeated_backward_accumulates() {
    let tape = Tape::<f64>::new(false);
    let x = tape.leaf(random(2, 2, 1), true);
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 2.0));
}

#[test]
fn backward_errors() {
    let tape = Tape::<f64>::new(false);
    let x = tape.leaf(random(2, 2, 1), false);
    let s = tape.sum(x);
    assert!(matches!(tape.backward(s), Err(Error::Detached)));
    let y = tape.leaf(random(2, 2, 1), true);
    assert!(matches!(tape.backward(y), Err(Error::NotScalar(_))));
}

#[test]
fn non_finite_values_name_the_primitive() {
    let x = Matrix::from_elem((1, 2), 0.0);
    let err = grad_check(|t, v| Ok(t.sum(t.ln_clamp(v[0], 0.0))), &[x], &cfg(1e-5)).unwrap_err();
    assert!(matches!(err, Error::NonFinite { op: "ln" }), "{err}");
}

#[test]
fn gru_zero_everything_gives_zero() {
    let mut store = ParamStore::<f64>::new(0);
    let p = GruParams::new(&mut store, "gru", 3, 4);
    store.zero_values();
    let tape = Tape::new(false);
    let h = tape.constant(Matrix::zeros((1, 4)));
    let x = tape.constant(Matrix::zeros((1, 3)));
    let out = gru_cell(&tape, &store, &p, h, x).unwrap();
    assert!(tape.value(out).iter().all(|&v| v == 0.0));
}

#[test]
fn gru_scalar_case_matches_hand_computation() {
    let mut store = ParamStore::<f64>::new(0);
    let p = GruParams::new(&mut store, "gru", 1, 1);
    // update, reset, candidate blocks
    store.set("gru.w_input", Matrix::from_shape_vec((3, 1), vec![0.5, -0.3, 0.8]).unwrap()).unwrap();
    store.set("gru.w_gates", Matrix::from_shape_vec((2, 1), vec![0.2, 0.4]).unwrap()).unwrap();
    store.set("gru.w_cand", Matrix::from_elem((1, 1), -0.6)).unwrap();
    store.set("gru.bias", Matrix::from_shape_vec((1, 3), vec![0.1, 0.0, -0.2]).unwrap()).unwrap();
    let (h, x) = (0.7f64, 1.5f64);
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let z = sig(0.5 * x + 0.2 * h + 0.1);
    let r = sig(-0.3 * x + 0.4 * h);
    let cand = (0.8 * x - 0.6 * (r * h) - 0.2).tanh();
    let expected = (1.0 - z) * h + z * cand;

    let tape = Tape::new(false);
    let hv = tape.constant(Matrix::from_elem((1, 1), h));
    let xv = tape.constant(Matrix::from_elem((1, 1), x));
    let out = gru_cell(&tape, &store, &p, hv, xv).unwrap();
    assert!((tape.scalar(out) - expected).abs() < 1e-14);
}

#[test]
fn gru_parameter_gradients_match_finite_differences() {
    let mut store = ParamStore::<f64>::new(3);
    let p = GruParams::new(&mut store, "gru", 5, 4);
    for id in store.ids().collect::<Vec<_>>() {
        let (r, c) = store.value(id).dim();
        *store.value_mut(id) = random(r, c, 100 + id.index() as u64) * 0.8;
    }
    let h0 = random(2, 4, 7);
    let xs = [random(2, 5, 8), random(2, 5, 9), random(2, 5, 10)];
    let report = grad_check_params(
        |t, s| {
            let mut h = t.constant(h0.clone());
            for x in &xs {
                let xv = t.constant(x.clone());
                h = gru_cell(t, s, &p, h, xv)?;
            }
            contract(t, h, 1)
        },
        &mut store,
        &GradCheckConfig {
            tol: 1e-4,
            max_coords: 1000,
            ..GradCheckConfig::default()
        },
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn forward_is_bit_identical_across_runs() {
    let run = || {
        let tape = Tape::<f32>::new(true);
        let x = tape.leaf(random(4, 6, 1).mapv(|v| v as f32), false);
        let w = tape.leaf(random(6, 6, 2).mapv(|v| v as f32), false);
        let y = tape.matmul(x, w).unwrap();
        let y = tape.dropout(y, 0.2, 77).unwrap();
        let y = tape.softmax(y);
        let out = tape.value(y).clone();
        out
    };
    assert_eq!(run(), run());
}
