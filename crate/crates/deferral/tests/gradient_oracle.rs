//! Finite-difference verification of every analytic gradient, plus the
//! negative control proving the checker can actually fail.

use deferral::losses::LossSelector;
use deferral::optim::{grad_check, grad_check_fn, LossUnderTest, GRAD_CHECK_TOL};

const PROBES: usize = 1000;

#[test]
fn lce_alpha_gradients_match_finite_differences() {
    for alpha in [0.0, 0.3, 1.0, 2.0, 5.0] {
        let report = grad_check(LossUnderTest::LceAlpha { alpha }, PROBES, 11).unwrap();
        assert!(report.pass, "alpha = {alpha}: {report:?}");
        // Away from non-differentiable points the agreement is much tighter
        // than the pass threshold.
        assert!(report.max_rel_err <= 1e-5, "alpha = {alpha}: {report:?}");
    }
}

#[test]
fn cost_sensitive_gradients_match_finite_differences() {
    let report = grad_check(LossUnderTest::LceCostSensitive, PROBES, 13).unwrap();
    assert!(report.pass, "{report:?}");
    assert!(report.max_rel_err <= 1e-5, "{report:?}");
}

#[test]
fn mix_gradients_match_finite_differences_both_blocking_modes() {
    for block in [false, true] {
        let report = grad_check(
            LossUnderTest::Mix {
                block_classifier_gradient: block,
            },
            PROBES,
            17,
        )
        .unwrap();
        assert!(report.pass, "block = {block}: {report:?}");
        assert!(report.max_rel_err <= 1e-5, "block = {block}: {report:?}");
    }
}

#[test]
fn binary_exponential_gradients_match_finite_differences() {
    let report = grad_check(LossUnderTest::LshBinary, PROBES, 19).unwrap();
    assert!(report.pass, "{report:?}");
    assert!(report.max_rel_err <= 1e-5, "{report:?}");
}

#[test]
fn corrupted_gradient_fails_the_check() {
    // Negative control: a deliberately wrong gradient coordinate must trip
    // the checker, otherwise the suite proves nothing.
    let k = 3usize;
    let report = grad_check_fn(k + 1, 50, 23, |scores| {
        let eval = LossSelector::LceAlpha { alpha: 1.0 }
            .eval(scores, k, 0, Some(1))
            .unwrap();
        let mut grad = eval.grad;
        grad[0] += 1e-2;
        (eval.value, grad)
    });
    assert!(!report.pass, "corrupted gradient slipped through: {report:?}");
    assert!(report.max_rel_err >= 1e-3);
}

#[test]
fn honest_evaluator_passes_through_the_same_hook() {
    let k = 3usize;
    let report = grad_check_fn(k + 1, 200, 29, |scores| {
        let eval = LossSelector::LceAlpha { alpha: 0.5 }
            .eval(scores, k, 1, Some(1))
            .unwrap();
        (eval.value, eval.grad)
    });
    assert!(report.pass, "{report:?}");
    assert_eq!(report.tolerance, GRAD_CHECK_TOL);
}
