//! Property tests for the loss layer: the surrogate's upper bound on the
//! system loss, softmax shift invariance, convexity probes, the
//! cost-sensitive reduction, and decision monotonicity in the threshold.

use proptest::prelude::*;
use rand::Rng;

use deferral::core::{argmax_tiebreak, softmax_stable, ScoreVector};
use deferral::losses::{
    eval_lce_alpha, eval_lce_cost_sensitive, eval_lmix, eval_loss_01, eval_lsh_binary, CostVector,
};
use deferral::rng::stream;

const LN_2: f64 = std::f64::consts::LN_2;

fn scores_strategy(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0..30.0f64, k + 1)
}

/// The headline guarantee: the surrogate at α = 1 never drops below the
/// system misclassification loss. Exhaustive randomized sweep, zero
/// violations tolerated.
#[test]
fn surrogate_upper_bounds_system_loss_on_100k_draws() {
    let mut rng = stream(97, 0);
    for trial in 0..100_000 {
        let k = rng.gen_range(2..=6usize);
        let raw: Vec<f64> = (0..=k).map(|_| rng.gen_range(-40.0..40.0)).collect();
        let y = rng.gen_range(0..k);
        let m = rng.gen_range(0..k);
        let scores = ScoreVector::new(raw).unwrap();
        let zero_one = eval_loss_01(&scores, y, m).unwrap();
        let surrogate = eval_lce_alpha(&scores, y, m, 1.0).unwrap().value;
        assert!(
            surrogate >= zero_one,
            "violation at trial {trial}: surrogate {surrogate} < system loss {zero_one} \
             (scores {:?}, y {y}, m {m})",
            scores.as_slice()
        );
    }
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(
        raw in prop::collection::vec(-50.0..50.0f64, 2..8),
        shift in -100.0..100.0f64,
    ) {
        let base = softmax_stable(&raw).unwrap();
        let shifted: Vec<f64> = raw.iter().map(|v| v + shift).collect();
        let moved = softmax_stable(&shifted).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        prop_assert!((base.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn softmax_preserves_argmax(raw in prop::collection::vec(-50.0..50.0f64, 2..8)) {
        let probs = softmax_stable(&raw).unwrap();
        prop_assert_eq!(
            argmax_tiebreak(&probs).unwrap(),
            argmax_tiebreak(&raw).unwrap()
        );
    }

    #[test]
    fn lce_alpha_is_midpoint_convex(
        g1 in scores_strategy(3),
        g2 in scores_strategy(3),
        y in 0..3usize,
        m in 0..3usize,
        alpha in 0.0..5.0f64,
    ) {
        let mid: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| 0.5 * (a + b)).collect();
        let at = |v: &[f64]| {
            eval_lce_alpha(&ScoreVector::new(v.to_vec()).unwrap(), y, m, alpha)
                .unwrap()
                .value
        };
        prop_assert!(at(&mid) <= 0.5 * (at(&g1) + at(&g2)) + 1e-9);
    }

    #[test]
    fn cost_sensitive_is_midpoint_convex(
        g1 in scores_strategy(3),
        g2 in scores_strategy(3),
        costs in prop::collection::vec(0.0..3.0f64, 4),
    ) {
        let costs = CostVector::new(costs).unwrap();
        let mid: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| 0.5 * (a + b)).collect();
        let at = |v: &[f64]| {
            eval_lce_cost_sensitive(&ScoreVector::new(v.to_vec()).unwrap(), &costs)
                .unwrap()
                .value
        };
        prop_assert!(at(&mid) <= 0.5 * (at(&g1) + at(&g2)) + 1e-9);
    }

    #[test]
    fn deferral_costs_reduce_to_the_alpha_one_surrogate(
        raw in scores_strategy(4),
        y in 0..4usize,
        m in 0..4usize,
    ) {
        let scores = ScoreVector::new(raw).unwrap();
        let costs = CostVector::deferral_costs(4, y, m).unwrap();
        let reduced = eval_lce_cost_sensitive(&scores, &costs).unwrap();
        let direct = eval_lce_alpha(&scores, y, m, 1.0).unwrap();
        prop_assert!((reduced.value - direct.value).abs() <= 1e-10);
        for (a, b) in reduced.grad.iter().zip(&direct.grad) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn alpha_zero_agreement_gradient_ignores_the_true_class(
        raw in scores_strategy(3),
        y in 0..3usize,
    ) {
        // With α = 0 and the expert agreeing, the true-class weight vanishes:
        // the gradient is exactly the softmax minus the deferral indicator.
        let scores = ScoreVector::new(raw.clone()).unwrap();
        let eval = eval_lce_alpha(&scores, y, y, 0.0).unwrap();
        let p = softmax_stable(&raw).unwrap();
        for (i, (gi, pi)) in eval.grad.iter().zip(&p).enumerate() {
            let expect = (pi - ((i == raw.len() - 1) as u8 as f64)) / LN_2;
            prop_assert!((gi - expect).abs() <= 1e-12, "coord {i}: {gi} vs {expect}");
        }
    }

    #[test]
    fn all_losses_are_non_negative(
        raw in scores_strategy(3),
        gate in prop::collection::vec(-20.0..20.0f64, 2),
        y in 0..3usize,
        m in 0..3usize,
        alpha in 0.0..5.0f64,
        c in 0.0..0.99f64,
        cx in 0.05..0.95f64,
    ) {
        let scores = ScoreVector::new(raw.clone()).unwrap();
        prop_assert!(eval_lce_alpha(&scores, y, m, alpha).unwrap().value >= 0.0);
        let costs = CostVector::deferral_costs(3, y, m).unwrap();
        prop_assert!(eval_lce_cost_sensitive(&scores, &costs).unwrap().value >= 0.0);
        let mix = eval_lmix(&raw[..3], &[gate[0], gate[1]], y, m, false).unwrap();
        prop_assert!(mix.value >= 0.0);
        let ys = if y == 0 { -1.0 } else { 1.0 };
        let ms = if m == 0 { -1.0 } else { 1.0 };
        let sh = eval_lsh_binary(raw[0] / 10.0, raw[1] / 10.0, ys, ms, c, cx, 1.0).unwrap();
        prop_assert!(sh.value >= 0.0);
    }

    #[test]
    fn blocking_changes_only_the_classifier_gradient(
        raw in prop::collection::vec(-10.0..10.0f64, 3),
        gate in prop::collection::vec(-5.0..5.0f64, 2),
        y in 0..3usize,
        m in 0..3usize,
    ) {
        let gate = [gate[0], gate[1]];
        let open = eval_lmix(&raw, &gate, y, m, false).unwrap();
        let blocked = eval_lmix(&raw, &gate, y, m, true).unwrap();
        prop_assert_eq!(open.value, blocked.value);
        let sigma0 = softmax_stable(&gate).unwrap()[0];
        for (o, b) in open.grad.iter().zip(&blocked.grad) {
            prop_assert!((o - sigma0 * b).abs() <= 1e-12);
        }
        prop_assert_eq!(open.rejector_grad.unwrap(), blocked.rejector_grad.unwrap());
    }

    #[test]
    fn deferral_decision_is_monotone_in_the_threshold(
        raw in scores_strategy(3),
        tau_lo in -5.0..5.0f64,
        gap in 0.0..5.0f64,
    ) {
        // Raising the threshold can only shrink the deferred set.
        let scores = ScoreVector::new(raw).unwrap();
        let tau_hi = tau_lo + gap;
        let defer_hi = scores.deferral_margin() >= tau_hi;
        let defer_lo = scores.deferral_margin() >= tau_lo;
        prop_assert!(!defer_hi || defer_lo);
    }
}
