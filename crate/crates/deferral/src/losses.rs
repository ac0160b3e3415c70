//! Loss functions for learning to defer: the target 0-1 system loss, the
//! consistent cost-sensitive / α-weighted cross-entropy surrogates, the
//! mixture-of-experts loss, and the binary exponential surrogate.
//!
//! All log-based losses are measured in **bits** (base-2 logs). The base
//! matters: the guarantee that the α = 1 surrogate upper-bounds the 0-1
//! system loss rests on `p <= 1/2  =>  -log p >= 1`, which holds for base 2
//! and fails for natural logs. Minimizers, argmax decisions, and consistency
//! statements are unaffected by the base; only values and gradient scales
//! change.
//!
//! Gradient conventions: every evaluator returns the exact analytic gradient
//! of its `value` with respect to the raw scores it consumed. The one
//! deliberate exception is the mixture loss with `block_classifier_gradient`
//! set, which reproduces the reference training scheme where the classifier
//! is updated by plain cross entropy while the gating weights still see the
//! full objective.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::core::{argmax_tiebreak, log2_softmax, softmax_stable, ScoreVector};
use crate::error::{Error, Result};

/// Per-decision costs: `costs[i]` for predicting class `i` (`i < K`) and
/// `costs[K]` for deferring. Entries must be finite and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostVector {
    costs: Vec<f64>,
}

impl CostVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "cost vector needs at least 2 entries (K >= 1 classes plus deferral), got {}",
                costs.len()
            )));
        }
        if let Some(bad) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidInput(format!(
                "costs must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self { costs })
    }

    /// Canonical deferral costs for a labeled pair: misclassification costs
    /// `c_i = I[i != y]` for the classes and `c_K = I[m != y]` for deferring.
    pub fn deferral_costs(num_classes: usize, y: usize, m: usize) -> Result<Self> {
        if y >= num_classes || m >= num_classes {
            return Err(Error::InvalidInput(format!(
                "labels y={y}, m={m} must lie in 0..{num_classes}"
            )));
        }
        let mut costs = vec![1.0; num_classes + 1];
        costs[y] = 0.0;
        costs[num_classes] = if m == y { 0.0 } else { 1.0 };
        Self::new(costs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects short vectors
    }

    pub fn deferral_cost(&self) -> f64 {
        *self.costs.last().expect("validated non-empty")
    }

    pub fn max(&self) -> f64 {
        self.costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A loss value together with its gradient.
///
/// `grad` is taken with respect to the scores passed in (`K + 1` entries for
/// the deferral surrogates, `K` classifier entries for the mixture loss, and
/// `[d/dh, d/dr]` for the binary surrogate). The mixture loss additionally
/// reports the gradient with respect to its two rejector scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub rejector_grad: Option<[f64; 2]>,
}

fn validate_labels(num_classes: usize, y: usize, m: usize) -> Result<()> {
    if y >= num_classes {
        return Err(Error::InvalidInput(format!(
            "label y={y} outside 0..{num_classes}"
        )));
    }
    if m >= num_classes {
        return Err(Error::InvalidInput(format!(
            "expert label m={m} outside 0..{num_classes}"
        )));
    }
    Ok(())
}

/// The 0-1 system loss: a unit cost when the classifier is used and wrong, or
/// when the expert is consulted and wrong. The rejector fires exactly when the
/// deferral score reaches the best class score, so ties defer.
pub fn eval_loss_01(scores: &ScoreVector, y: usize, m: usize) -> Result<f64> {
    validate_labels(scores.num_classes(), y, m)?;
    let defer = scores.deferral_margin() >= 0.0;
    if defer {
        Ok(if m == y { 0.0 } else { 1.0 })
    } else {
        let h = argmax_tiebreak(scores.class_scores())?;
        Ok(if h == y { 0.0 } else { 1.0 })
    }
}

/// α-weighted deferral cross entropy over `K + 1` scores (deferral last):
///
/// ```text
/// value = -w * log2 p_y - I[m = y] * log2 p_bot,   w = alpha * I[m = y] + I[m != y]
/// ```
///
/// At α = 1 this is the consistent surrogate whose population minimizer is
/// `p_i = eta_i / (1 + pm)`, `p_bot = pm / (1 + pm)`; smaller α down-weights
/// the classifier's target term on examples the expert already gets right.
pub fn eval_lce_alpha(scores: &ScoreVector, y: usize, m: usize, alpha: f64) -> Result<LossEval> {
    validate_labels(scores.num_classes(), y, m)?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidInput(format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    let k = scores.num_classes();
    let lp = log2_softmax(scores.as_slice())?;
    let p = softmax_stable(scores.as_slice())?;
    let agree = m == y;
    let w = if agree { alpha } else { 1.0 };
    let u = if agree { 1.0 } else { 0.0 };
    let value = -w * lp[y] - u * lp[k];
    let mut grad: Vec<f64> = p.iter().map(|&pi| (w + u) * pi / LN_2).collect();
    grad[y] -= w / LN_2;
    grad[k] -= u / LN_2;
    Ok(LossEval {
        value,
        grad,
        rejector_grad: None,
    })
}

/// Cost-sensitive cross entropy: with weights `w_i = max_j c_j - c_i`,
///
/// ```text
/// value = -sum_i w_i * log2 p_i
/// ```
///
/// Its pointwise minimizer puts probability `w_i / sum_j w_j` on slot `i`, so
/// the argmax of the learned scores is the cheapest decision. All-equal costs
/// zero every weight and the loss is identically 0, which is legal.
pub fn eval_lce_cost_sensitive(scores: &ScoreVector, costs: &CostVector) -> Result<LossEval> {
    if costs.len() != scores.num_classes() + 1 {
        return Err(Error::InvalidInput(format!(
            "cost vector has {} entries but scores imply {}",
            costs.len(),
            scores.num_classes() + 1
        )));
    }
    let cmax = costs.max();
    let w: Vec<f64> = costs.as_slice().iter().map(|&c| cmax - c).collect();
    let wsum: f64 = w.iter().sum();
    let lp = log2_softmax(scores.as_slice())?;
    let p = softmax_stable(scores.as_slice())?;
    let value = -w.iter().zip(&lp).map(|(wi, lpi)| wi * lpi).sum::<f64>();
    let grad: Vec<f64> = p
        .iter()
        .zip(&w)
        .map(|(&pi, &wi)| (wsum * pi - wi) / LN_2)
        .collect();
    Ok(LossEval {
        value,
        grad,
        rejector_grad: None,
    })
}

/// Mixture-of-experts loss: a two-way softmax gate `(sigma_0, sigma_1)` over
/// `rejector_scores` arbitrates between the classifier's cross entropy and
/// the expert's error indicator:
///
/// ```text
/// value = CE(class_scores, y) * sigma_0 + I[m != y] * sigma_1
/// ```
///
/// `grad` is with respect to `class_scores`, `rejector_grad` with respect to
/// the two gate scores. With `block_classifier_gradient` the classifier
/// gradient is plain cross entropy (the gate's weight is stopped), matching
/// the reference implementation this loss is compared against; the gate
/// gradient is unchanged.
pub fn eval_lmix(
    class_scores: &[f64],
    rejector_scores: &[f64; 2],
    y: usize,
    m: usize,
    block_classifier_gradient: bool,
) -> Result<LossEval> {
    if class_scores.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "mixture loss needs at least 2 class scores, got {}",
            class_scores.len()
        )));
    }
    validate_labels(class_scores.len(), y, m)?;
    let lp = log2_softmax(class_scores)?;
    let p = softmax_stable(class_scores)?;
    let sig = softmax_stable(rejector_scores)?;
    let ce = -lp[y];
    let wrong = if m == y { 0.0 } else { 1.0 };
    let value = ce * sig[0] + wrong * sig[1];

    let class_weight = if block_classifier_gradient { 1.0 } else { sig[0] };
    let mut grad: Vec<f64> = p.iter().map(|&pi| class_weight * pi / LN_2).collect();
    grad[y] -= class_weight / LN_2;

    let coupling = sig[0] * sig[1] * (ce - wrong);
    Ok(LossEval {
        value,
        grad,
        rejector_grad: Some([coupling, -coupling]),
    })
}

/// Binary exponential surrogate for a real-valued classifier score `h` and
/// rejector score `r`, with labels in `{-1, +1}`:
///
/// ```text
/// value = exp((alpha/2) * (r - h*y)) + (c + I[m != y]) * exp(-beta * r)
/// ```
///
/// `beta = alpha * sqrt((1 - cx) / cx)` where `cx` estimates the pointwise
/// deferral cost `c(x) = c + (1 - c) * P(M != Y | x)`; pinning the ratio
/// `beta / alpha` to that expression is what makes the surrogate consistent.
/// `grad` holds `[d value / d h, d value / d r]`.
pub fn eval_lsh_binary(
    h_score: f64,
    r_score: f64,
    y: f64,
    m: f64,
    c: f64,
    cx: f64,
    alpha: f64,
) -> Result<LossEval> {
    for (name, v) in [("h", h_score), ("r", r_score)] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite {name} score {v}")));
        }
    }
    if y != 1.0 && y != -1.0 {
        return Err(Error::InvalidInput(format!("label y must be -1 or +1, got {y}")));
    }
    if m != 1.0 && m != -1.0 {
        return Err(Error::InvalidInput(format!(
            "expert label m must be -1 or +1, got {m}"
        )));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(Error::InvalidInput(format!(
            "base deferral cost must be finite and non-negative, got {c}"
        )));
    }
    if !cx.is_finite() || cx <= 0.0 || cx >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "pointwise cost estimate cx must lie strictly inside (0, 1), got {cx}"
        )));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "alpha must be finite and positive, got {alpha}"
        )));
    }
    let beta = alpha * ((1.0 - cx) / cx).sqrt();
    let wrong = if (m - y).abs() < f64::EPSILON { 0.0 } else { 1.0 };
    let e1 = ((alpha / 2.0) * (r_score - h_score * y)).exp();
    let e2 = (c + wrong) * (-beta * r_score).exp();
    let value = e1 + e2;
    if !value.is_finite() {
        return Err(Error::InvalidInput(
            "exponential surrogate overflowed; scores too large".into(),
        ));
    }
    let dh = -(alpha / 2.0) * y * e1;
    let dr = (alpha / 2.0) * e1 - beta * e2;
    Ok(LossEval {
        value,
        grad: vec![dh, dr],
        rejector_grad: None,
    })
}

/// Which loss a trainer should optimize; serializable so experiment configs
/// can select it by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LossSelector {
    /// `eval_lce_alpha` on `K + 1` scores.
    LceAlpha { alpha: f64 },
    /// `eval_lce_cost_sensitive` with the canonical deferral costs built from
    /// each example's `(y, m)`.
    LceDeferralCosts,
    /// Plain `K`-class cross entropy (bits); ignores expert labels.
    CrossEntropy,
    /// `eval_lmix` on `K` class scores plus 2 rejector scores.
    Mix { block_classifier_gradient: bool },
}

impl LossSelector {
    /// Output width a model must have to train against this loss.
    pub fn output_dim(&self, num_classes: usize) -> usize {
        match self {
            LossSelector::LceAlpha { .. } | LossSelector::LceDeferralCosts => num_classes + 1,
            LossSelector::CrossEntropy => num_classes,
            LossSelector::Mix { .. } => num_classes + 2,
        }
    }

    /// Whether training examples need expert labels.
    pub fn needs_expert(&self) -> bool {
        !matches!(self, LossSelector::CrossEntropy)
    }

    /// Evaluates the loss on raw model outputs for one example, returning the
    /// value and the gradient with respect to all `output_dim` scores.
    pub fn eval(&self, outputs: &[f64], num_classes: usize, y: usize, m: Option<usize>) -> Result<LossEval> {
        let expert = || {
            m.ok_or_else(|| Error::InvalidInput("loss requires an expert label".into()))
        };
        match self {
            LossSelector::LceAlpha { alpha } => {
                let s = ScoreVector::new(outputs.to_vec())?;
                eval_lce_alpha(&s, y, expert()?, *alpha)
            }
            LossSelector::LceDeferralCosts => {
                let s = ScoreVector::new(outputs.to_vec())?;
                let costs = CostVector::deferral_costs(num_classes, y, expert()?)?;
                eval_lce_cost_sensitive(&s, &costs)
            }
            LossSelector::CrossEntropy => {
                if outputs.len() != num_classes {
                    return Err(Error::InvalidInput(format!(
                        "cross entropy expects {num_classes} scores, got {}",
                        outputs.len()
                    )));
                }
                if y >= num_classes {
                    return Err(Error::InvalidInput(format!(
                        "label y={y} outside 0..{num_classes}"
                    )));
                }
                let lp = log2_softmax(outputs)?;
                let p = softmax_stable(outputs)?;
                let mut grad: Vec<f64> = p.iter().map(|&pi| pi / LN_2).collect();
                grad[y] -= 1.0 / LN_2;
                Ok(LossEval {
                    value: -lp[y],
                    grad,
                    rejector_grad: None,
                })
            }
            LossSelector::Mix {
                block_classifier_gradient,
            } => {
                if outputs.len() != num_classes + 2 {
                    return Err(Error::InvalidInput(format!(
                        "mixture loss expects {} scores (K class + 2 gate), got {}",
                        num_classes + 2,
                        outputs.len()
                    )));
                }
                let (class, gate) = outputs.split_at(num_classes);
                let rejector = [gate[0], gate[1]];
                let eval = eval_lmix(class, &rejector, y, expert()?, *block_classifier_gradient)?;
                let mut grad = eval.grad.clone();
                let rg = eval.rejector_grad.expect("mixture loss sets rejector grad");
                grad.extend_from_slice(&rg);
                Ok(LossEval {
                    value: eval.value,
                    grad,
                    rejector_grad: Some(rg),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG2_3: f64 = 1.5849625007211562;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn sv(scores: &[f64]) -> ScoreVector {
        ScoreVector::new(scores.to_vec()).unwrap()
    }

    #[test]
    fn loss_01_covers_all_decision_cells() {
        // Defer (margin >= 0) and expert right / wrong.
        assert_eq!(eval_loss_01(&sv(&[0.0, 0.0, 1.0]), 0, 0).unwrap(), 0.0);
        assert_eq!(eval_loss_01(&sv(&[0.0, 0.0, 1.0]), 0, 1).unwrap(), 1.0);
        // Predict and classifier right / wrong.
        assert_eq!(eval_loss_01(&sv(&[2.0, 0.0, -1.0]), 0, 1).unwrap(), 0.0);
        assert_eq!(eval_loss_01(&sv(&[0.0, 2.0, -1.0]), 0, 0).unwrap(), 1.0);
        // Exact tie between best class and deferral defers.
        assert_eq!(eval_loss_01(&sv(&[1.0, 0.0, 1.0]), 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn lce_alpha_reference_values() {
        // Uniform scores, expert wrong: only the target term, -log2(1/3).
        let e = eval_lce_alpha(&sv(&[0.0, 0.0, 0.0]), 0, 1, 1.0).unwrap();
        assert_close(e.value, LOG2_3, 1e-12);
        let scale = 1.0 / LN_2;
        assert_close(e.grad[0], (1.0 / 3.0 - 1.0) * scale, 1e-12);
        assert_close(e.grad[1], (1.0 / 3.0) * scale, 1e-12);
        assert_close(e.grad[2], (1.0 / 3.0) * scale, 1e-12);

        // Expert right: target term plus deferral term.
        let e = eval_lce_alpha(&sv(&[0.0, 0.0, 0.0]), 0, 0, 1.0).unwrap();
        assert_close(e.value, 2.0 * LOG2_3, 1e-12);
        assert_close(e.grad[0], (2.0 / 3.0 - 1.0) * scale, 1e-12);
        assert_close(e.grad[1], (2.0 / 3.0) * scale, 1e-12);
        assert_close(e.grad[2], (2.0 / 3.0 - 1.0) * scale, 1e-12);

        // Non-uniform scores: -log2 p_0 - log2 p_bot at (1, 0, -1).
        let e = eval_lce_alpha(&sv(&[1.0, 0.0, -1.0]), 0, 0, 1.0).unwrap();
        assert_close(e.value, 4.061492288859268, 1e-9);
    }

    #[test]
    fn lce_alpha_zero_drops_target_term_when_expert_right() {
        let e = eval_lce_alpha(&sv(&[0.7, -0.2, 0.1]), 0, 0, 0.0).unwrap();
        let p = softmax_stable(&[0.7, -0.2, 0.1]).unwrap();
        // grad = (p - e_bot) / ln 2 exactly: no pull on the true-class logit
        // beyond the softmax coupling.
        assert_close(e.grad[0], p[0] / LN_2, 1e-15);
        assert_close(e.grad[1], p[1] / LN_2, 1e-15);
        assert_close(e.grad[2], (p[2] - 1.0) / LN_2, 1e-15);
        let lp = log2_softmax(&[0.7, -0.2, 0.1]).unwrap();
        assert_close(e.value, -lp[2], 1e-12);
    }

    #[test]
    fn lce_alpha_one_equals_plain_deferral_ce() {
        // alpha = 1 weights the target term by 1 regardless of agreement.
        let s = sv(&[0.4, -1.0, 0.3]);
        let a1 = eval_lce_alpha(&s, 1, 1, 1.0).unwrap();
        let lp = log2_softmax(s.as_slice()).unwrap();
        assert_close(a1.value, -lp[1] - lp[2], 1e-12);
    }

    #[test]
    fn lce_alpha_rejects_bad_inputs() {
        assert!(eval_lce_alpha(&sv(&[0.0, 0.0, 0.0]), 5, 0, 1.0).is_err());
        assert!(eval_lce_alpha(&sv(&[0.0, 0.0, 0.0]), 0, 5, 1.0).is_err());
        assert!(eval_lce_alpha(&sv(&[0.0, 0.0, 0.0]), 0, 0, -0.5).is_err());
        assert!(eval_lce_alpha(&sv(&[0.0, 0.0, 0.0]), 0, 0, f64::NAN).is_err());
    }

    #[test]
    fn cost_sensitive_reference_values() {
        // Weights (1, 0, 0): only class 0 is attracted.
        let c = CostVector::new(vec![0.0, 1.0, 1.0]).unwrap();
        let e = eval_lce_cost_sensitive(&sv(&[0.0, 0.0, 0.0]), &c).unwrap();
        assert_close(e.value, LOG2_3, 1e-12);

        // Weights (1, 0, 0.5).
        let c = CostVector::new(vec![0.0, 1.0, 0.5]).unwrap();
        let e = eval_lce_cost_sensitive(&sv(&[0.0, 0.0, 0.0]), &c).unwrap();
        assert_close(e.value, 1.5 * LOG2_3, 1e-12);

        // All-equal costs: zero weights, zero loss, zero gradient.
        let c = CostVector::new(vec![0.3, 0.3, 0.3]).unwrap();
        let e = eval_lce_cost_sensitive(&sv(&[1.0, -2.0, 0.5]), &c).unwrap();
        assert_close(e.value, 0.0, 1e-15);
        for g in &e.grad {
            assert_close(*g, 0.0, 1e-15);
        }
    }

    #[test]
    fn cost_sensitive_reduces_to_alpha_one() {
        // Canonical deferral costs reproduce the alpha = 1 surrogate.
        let cases = [(0usize, 0usize), (0, 1), (1, 0), (2, 2)];
        for &(y, m) in &cases {
            let s = sv(&[0.3, -0.7, 1.1, 0.2]);
            let costs = CostVector::deferral_costs(3, y, m).unwrap();
            let a = eval_lce_cost_sensitive(&s, &costs).unwrap();
            let b = eval_lce_alpha(&s, y, m, 1.0).unwrap();
            assert_close(a.value, b.value, 1e-10);
            for (ga, gb) in a.grad.iter().zip(&b.grad) {
                assert_close(*ga, *gb, 1e-10);
            }
        }
    }

    #[test]
    fn cost_vector_validation() {
        assert!(CostVector::new(vec![0.5]).is_err());
        assert!(CostVector::new(vec![0.5, -0.1]).is_err());
        assert!(CostVector::new(vec![0.5, f64::NAN]).is_err());
    }

    #[test]
    fn lmix_reference_values() {
        // Uniform gate, uniform binary classifier, expert right:
        // value = CE * 0.5 = 1 bit * 0.5.
        let e = eval_lmix(&[0.0, 0.0], &[0.0, 0.0], 0, 0, false).unwrap();
        assert_close(e.value, 0.5, 1e-12);

        // Expert wrong adds I[m != y] * sigma_1 = 0.5.
        let e = eval_lmix(&[0.0, 0.0], &[0.0, 0.0], 0, 1, false).unwrap();
        assert_close(e.value, 1.0, 1e-12);

        // Saturated gate toward the classifier: value ~ CE.
        let e = eval_lmix(&[0.2, -0.4], &[50.0, -50.0], 0, 1, false).unwrap();
        let lp = log2_softmax(&[0.2, -0.4]).unwrap();
        assert_close(e.value, -lp[0], 1e-9);
    }

    #[test]
    fn lmix_blocked_gradient_is_plain_ce() {
        let class = [0.3, -0.5, 0.9];
        let gate = [0.4, -0.2];
        let open = eval_lmix(&class, &gate, 2, 1, false).unwrap();
        let blocked = eval_lmix(&class, &gate, 2, 1, true).unwrap();
        // Same value, same gate gradient, classifier gradient loses the
        // sigma_0 weight.
        assert_close(open.value, blocked.value, 1e-15);
        let sig = softmax_stable(&gate).unwrap();
        for (go, gb) in open.grad.iter().zip(&blocked.grad) {
            assert_close(*go, sig[0] * *gb, 1e-12);
        }
        assert_eq!(open.rejector_grad, blocked.rejector_grad);
    }

    #[test]
    fn lsh_reference_values() {
        // cx = 0.5 -> beta = alpha; at r = 0 both exponentials are 1.
        let e = eval_lsh_binary(0.0, 0.0, 1.0, 1.0, 0.25, 0.5, 1.0).unwrap();
        assert_close(e.value, 1.25, 1e-12);

        // Correct margin h*y = 1: exp(-1/2) + 0.25.
        let e = eval_lsh_binary(1.0, 0.0, 1.0, 1.0, 0.25, 0.5, 1.0).unwrap();
        assert_close(e.value, 0.8565306597126334, 1e-12);

        assert!(eval_lsh_binary(0.0, 0.0, 1.0, 1.0, 0.25, 0.0, 1.0).is_err());
        assert!(eval_lsh_binary(0.0, 0.0, 1.0, 1.0, 0.25, 1.0, 1.0).is_err());
        assert!(eval_lsh_binary(0.0, 0.0, 0.5, 1.0, 0.25, 0.5, 1.0).is_err());
    }

    #[test]
    fn values_are_non_negative() {
        let s = sv(&[2.0, -3.0, 0.5]);
        assert!(eval_lce_alpha(&s, 0, 1, 0.5).unwrap().value >= 0.0);
        let c = CostVector::new(vec![0.2, 0.9, 0.4]).unwrap();
        assert!(eval_lce_cost_sensitive(&s, &c).unwrap().value >= 0.0);
        assert!(eval_lmix(&[1.0, -1.0], &[0.3, 0.1], 0, 1, false).unwrap().value >= 0.0);
        assert!(eval_lsh_binary(2.0, -1.0, -1.0, 1.0, 0.1, 0.3, 1.0).unwrap().value >= 0.0);
    }

    #[test]
    fn selector_shapes_and_dispatch() {
        let sel = LossSelector::LceAlpha { alpha: 1.0 };
        assert_eq!(sel.output_dim(4), 5);
        assert!(sel.needs_expert());
        let sel = LossSelector::CrossEntropy;
        assert_eq!(sel.output_dim(4), 4);
        assert!(!sel.needs_expert());
        let sel = LossSelector::Mix {
            block_classifier_gradient: true,
        };
        assert_eq!(sel.output_dim(4), 6);

        // Mixture dispatch concatenates classifier and gate gradients.
        let e = sel.eval(&[0.1, -0.2, 0.3, 0.0, 0.5, -0.5], 4, 2, Some(1)).unwrap();
        assert_eq!(e.grad.len(), 6);
        assert!(e.rejector_grad.is_some());

        // Expert-dependent losses refuse examples without expert labels.
        let sel = LossSelector::LceAlpha { alpha: 0.5 };
        assert!(sel.eval(&[0.0, 0.0, 0.0], 2, 0, None).is_err());
    }
}
