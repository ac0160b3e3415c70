//! Population-level analysis on finite distributions: the Bayes
//! classifier/rejector pair, closed-form surrogate minimizers, and a
//! numerical harness that minimizes the exact expected surrogate per point
//! and checks the induced decisions against the oracles.
//!
//! A [`DistributionSpec`] is a finite list of points, each carrying its
//! probability mass, the class posterior `eta`, and the expert-correctness
//! probability `pm = P(M = Y | X = x)`. Because the harness gives every point
//! its own free score vector, the expected surrogate separates across points
//! and each point can be minimized independently.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::core::{argmax_tiebreak, log2_softmax, softmax_stable};
use crate::error::{Error, Result};

/// One atom of a finite distribution over inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistPoint {
    pub id: usize,
    /// Probability mass of this input.
    pub mass: f64,
    /// Class posterior `P(Y = y | X = x)`, length `K`, sums to 1.
    pub eta: Vec<f64>,
    /// Expert correctness `P(M = Y | X = x)`.
    pub pm: f64,
}

/// A validated finite distribution: masses sum to 1 within 1e-12, every
/// posterior sums to 1, and all points share the same class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    points: Vec<DistPoint>,
    num_classes: usize,
}

impl DistributionSpec {
    pub fn new(points: Vec<DistPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("distribution needs at least one point".into()));
        }
        let num_classes = points[0].eta.len();
        if num_classes < 2 {
            return Err(Error::InvalidInput(
                "distribution points need at least two classes".into(),
            ));
        }
        let mut mass_sum = 0.0;
        for p in &points {
            if p.eta.len() != num_classes {
                return Err(Error::InvalidInput(format!(
                    "point {} has {} classes, expected {num_classes}",
                    p.id,
                    p.eta.len()
                )));
            }
            if !p.mass.is_finite() || p.mass < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "point {} has invalid mass {}",
                    p.id, p.mass
                )));
            }
            if !p.pm.is_finite() || !(0.0..=1.0).contains(&p.pm) {
                return Err(Error::InvalidInput(format!(
                    "point {} has expert correctness {} outside [0, 1]",
                    p.id, p.pm
                )));
            }
            let eta_sum: f64 = p.eta.iter().sum();
            if p.eta.iter().any(|e| !e.is_finite() || *e < 0.0) || (eta_sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "point {} has an invalid posterior (sum {eta_sum})",
                    p.id
                )));
            }
            mass_sum += p.mass;
        }
        if (mass_sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "point masses sum to {mass_sum}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { points, num_classes })
    }

    pub fn points(&self) -> &[DistPoint] {
        &self.points
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// A classify-or-defer decision at one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub prediction: usize,
    pub defer: bool,
}

/// The Bayes-optimal system decision at each point: predict the posterior
/// argmax, and defer exactly when the expert's correctness matches or beats
/// it (`max_y eta_y <= pm`; ties defer).
pub fn bayes_solution(dist: &DistributionSpec) -> Result<Vec<Decision>> {
    dist.points
        .iter()
        .map(|p| {
            let prediction = argmax_tiebreak(&p.eta)?;
            let defer = p.eta[prediction] <= p.pm;
            Ok(Decision { prediction, defer })
        })
        .collect()
}

/// Index of the cheapest decision, breaking ties toward the lowest index.
pub fn cost_sensitive_argmin(expected_costs: &[f64]) -> Result<usize> {
    if expected_costs.is_empty() {
        return Err(Error::InvalidInput("argmin of an empty slice".into()));
    }
    if let Some(bad) = expected_costs.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite expected cost {bad}")));
    }
    let mut best = 0usize;
    for (i, &c) in expected_costs.iter().enumerate().skip(1) {
        if c < expected_costs[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Closed-form population minimizer of the α = 1 deferral cross entropy at a
/// point with posterior `eta` and expert correctness `pm`: the optimal
/// softmax is `(eta_1, ..., eta_K, pm) / (1 + pm)`.
pub fn lce_population_minimizer(eta: &[f64], pm: f64) -> Result<Vec<f64>> {
    if eta.is_empty() {
        return Err(Error::InvalidInput("empty posterior".into()));
    }
    if eta.iter().any(|e| !e.is_finite() || *e < 0.0) || (eta.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidInput("posterior must be non-negative and sum to 1".into()));
    }
    if !pm.is_finite() || !(0.0..=1.0).contains(&pm) {
        return Err(Error::InvalidInput(format!(
            "expert correctness {pm} outside [0, 1]"
        )));
    }
    let z = 1.0 + pm;
    let mut out: Vec<f64> = eta.iter().map(|e| e / z).collect();
    out.push(pm / z);
    Ok(out)
}

/// Shannon entropy in bits with the `0 * log 0 = 0` convention.
fn entropy_bits(eta: &[f64]) -> f64 {
    -eta.iter()
        .filter(|&&e| e > 0.0)
        .map(|&e| e * e.log2())
        .sum::<f64>()
}

/// Population rejector induced by the mixture-of-experts loss: at its
/// pointwise optimum the classifier's cross entropy equals the posterior
/// entropy (bits, matching the loss's base), so the gate defers exactly when
/// `H(eta) >= 1 - pm`.
///
/// This rule compares entropy against expert error rather than `max eta`
/// against `pm`, which is why the mixture loss is not classification
/// consistent: a flat-but-decided posterior can trip the entropy test while
/// the Bayes rule still predicts.
pub fn lmix_population_rejector(eta: &[f64], pm: f64) -> Result<bool> {
    if eta.is_empty() {
        return Err(Error::InvalidInput("empty posterior".into()));
    }
    if eta.iter().any(|e| !e.is_finite() || *e < 0.0) || (eta.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidInput("posterior must be non-negative and sum to 1".into()));
    }
    if !pm.is_finite() || !(0.0..=1.0).contains(&pm) {
        return Err(Error::InvalidInput(format!(
            "expert correctness {pm} outside [0, 1]"
        )));
    }
    Ok(entropy_bits(eta) >= 1.0 - pm)
}

/// Which surrogate the consistency harness minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SurrogateKind {
    LceAlpha { alpha: f64 },
    Mix,
}

impl SurrogateKind {
    fn name(&self) -> String {
        match self {
            SurrogateKind::LceAlpha { alpha } => format!("lce_alpha_{alpha}"),
            SurrogateKind::Mix => "mix".to_string(),
        }
    }
}

/// Knobs for the per-point minimization.
#[derive(Debug, Clone, Copy)]
pub struct ConsistencyOptions {
    /// Gradient-descent iteration budget per point.
    pub max_iters: usize,
    /// Convergence threshold on the gradient's max-norm.
    pub grad_tol: f64,
    /// Points with `|max eta - pm|` below this band are excluded from the
    /// Bayes-agreement count (the optimal decision is not identifiable there
    /// at finite precision). The same band applies to the entropy rule.
    pub near_tie_band: f64,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self {
            max_iters: 200_000,
            grad_tol: 1e-6,
            near_tie_band: 1e-3,
        }
    }
}

/// Outcome of minimizing the surrogate at one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointOutcome {
    pub id: usize,
    pub decision: Decision,
    pub bayes: Decision,
    /// `|max eta - pm|` fell inside the near-tie band.
    pub near_tie: bool,
    /// Decision equality with the Bayes oracle; `None` when excluded.
    pub agrees_with_bayes: Option<bool>,
    /// For the mixture surrogate: the entropy rule's verdict and agreement.
    pub entropy_defer: Option<bool>,
    pub agrees_with_entropy_rule: Option<bool>,
    pub converged: bool,
    pub grad_norm: f64,
    /// Max per-entry deviation of the optimized softmax from the closed-form
    /// minimizer (α = 1 only).
    pub softmax_deviation: Option<f64>,
}

/// Aggregate consistency report, serializable to JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub surrogate: String,
    pub total_points: usize,
    pub excluded_near_ties: usize,
    pub agreements_with_bayes: usize,
    pub disagreements_with_bayes: Vec<usize>,
    /// Agreement fraction among non-excluded points (1.0 when none remain).
    pub agreement_fraction: f64,
    pub all_converged: bool,
    pub max_grad_norm: f64,
    pub max_softmax_deviation: Option<f64>,
    pub points: Vec<PointOutcome>,
}

/// Gradient descent with a self-scaling step: the step doubles after a
/// directly accepted move and backtracks while the objective fails to
/// decrease. Returns `(params, grad_norm, converged)`.
fn minimize<F>(mut params: Vec<f64>, objective: F, max_iters: usize, grad_tol: f64) -> (Vec<f64>, f64, bool)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut step = 1.0;
    let (mut value, mut grad) = objective(&params);
    for _ in 0..max_iters {
        let norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if norm <= grad_tol {
            return (params, norm, true);
        }
        let mut accepted = false;
        let mut backtracks = 0;
        while backtracks < 80 {
            let candidate: Vec<f64> = params
                .iter()
                .zip(&grad)
                .map(|(p, g)| p - step * g)
                .collect();
            let (cand_value, cand_grad) = objective(&candidate);
            if cand_value.is_finite() && cand_value <= value {
                params = candidate;
                value = cand_value;
                grad = cand_grad;
                if backtracks == 0 {
                    step *= 2.0;
                }
                accepted = true;
                break;
            }
            step *= 0.5;
            backtracks += 1;
        }
        if !accepted {
            break; // step underflowed; report whatever gradient remains
        }
    }
    let norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    (params, norm, norm <= grad_tol)
}

/// Expected α-weighted deferral cross entropy at one point, as a function of
/// that point's `K + 1` free scores. With class-independent expert
/// correctness the weights are `w_y = eta_y * (1 - pm + alpha * pm)` on the
/// class slots and `w_bot = pm` on the deferral slot.
fn lce_point_objective(eta: &[f64], pm: f64, alpha: f64, scores: &[f64]) -> (f64, Vec<f64>) {
    let k = eta.len();
    let mut w: Vec<f64> = eta.iter().map(|e| e * (1.0 - pm + alpha * pm)).collect();
    w.push(pm);
    let wsum: f64 = w.iter().sum();
    let lp = log2_softmax(scores).expect("finite scores");
    let p = softmax_stable(scores).expect("finite scores");
    let value = -w.iter().zip(&lp).map(|(wi, lpi)| wi * lpi).sum::<f64>();
    let grad: Vec<f64> = (0..=k).map(|i| (wsum * p[i] - w[i]) / LN_2).collect();
    (value, grad)
}

/// Expected mixture loss at one point: `sigma_0 * CE(eta, p) + sigma_1 * (1 - pm)`
/// over params `[g_1..g_K, r_0, r_1]`, cross entropy in bits.
fn mix_point_objective(eta: &[f64], pm: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let k = eta.len();
    let (class, gate) = params.split_at(k);
    let lp = log2_softmax(class).expect("finite scores");
    let p = softmax_stable(class).expect("finite scores");
    let sig = softmax_stable(gate).expect("finite scores");
    let ce = -eta.iter().zip(&lp).map(|(e, l)| e * l).sum::<f64>();
    let expert_err = 1.0 - pm;
    let value = sig[0] * ce + sig[1] * expert_err;

    let mut grad = Vec::with_capacity(k + 2);
    for i in 0..k {
        grad.push(sig[0] * (p[i] - eta[i]) / LN_2);
    }
    let coupling = sig[0] * sig[1] * (ce - expert_err);
    grad.push(coupling);
    grad.push(-coupling);
    (value, grad)
}

/// Minimizes the exact expected surrogate with per-point free scores and
/// compares the induced decisions against [`bayes_solution`] (and, for the
/// mixture surrogate, against [`lmix_population_rejector`]).
///
/// Points whose Bayes decision sits within `near_tie_band` of the deferral
/// boundary are excluded from the agreement count but still reported.
/// Non-convergence is reported per point and in `all_converged`; it is never
/// silently treated as agreement.
pub fn verify_consistency(
    dist: &DistributionSpec,
    surrogate: SurrogateKind,
    opts: &ConsistencyOptions,
) -> Result<ConsistencyReport> {
    let bayes = bayes_solution(dist)?;
    let mut points = Vec::with_capacity(dist.points.len());
    let mut excluded = 0usize;
    let mut agreements = 0usize;
    let mut disagreements = Vec::new();
    let mut max_grad: f64 = 0.0;
    let mut max_dev: Option<f64> = None;

    for (point, bayes_decision) in dist.points.iter().zip(&bayes) {
        let k = dist.num_classes;
        let (decision, grad_norm, converged, softmax_deviation, entropy_defer) = match surrogate {
            SurrogateKind::LceAlpha { alpha } => {
                let init = vec![0.0; k + 1];
                let (scores, grad_norm, converged) = minimize(
                    init,
                    |s| lce_point_objective(&point.eta, point.pm, alpha, s),
                    opts.max_iters,
                    opts.grad_tol,
                );
                let p = softmax_stable(&scores)?;
                let prediction = argmax_tiebreak(&p[..k])?;
                let defer = p[k] >= p[prediction];
                let deviation = if (alpha - 1.0).abs() < 1e-12 {
                    let closed = lce_population_minimizer(&point.eta, point.pm)?;
                    Some(
                        p.iter()
                            .zip(&closed)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0f64, f64::max),
                    )
                } else {
                    None
                };
                (Decision { prediction, defer }, grad_norm, converged, deviation, None)
            }
            SurrogateKind::Mix => {
                let init = vec![0.0; k + 2];
                let (params, grad_norm, converged) = minimize(
                    init,
                    |s| mix_point_objective(&point.eta, point.pm, s),
                    opts.max_iters,
                    opts.grad_tol,
                );
                let (class, gate) = params.split_at(k);
                let prediction = argmax_tiebreak(class)?;
                let defer = gate[1] >= gate[0];
                let entropy_defer = lmix_population_rejector(&point.eta, point.pm)?;
                (
                    Decision { prediction, defer },
                    grad_norm,
                    converged,
                    None,
                    Some(entropy_defer),
                )
            }
        };

        max_grad = max_grad.max(grad_norm);
        if let Some(dev) = softmax_deviation {
            max_dev = Some(max_dev.unwrap_or(0.0).max(dev));
        }

        let max_eta = point.eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let near_bayes_tie = (max_eta - point.pm).abs() < opts.near_tie_band;
        let near_entropy_tie = matches!(surrogate, SurrogateKind::Mix)
            && (entropy_bits(&point.eta) - (1.0 - point.pm)).abs() < opts.near_tie_band;
        let near_tie = near_bayes_tie || near_entropy_tie;

        let agrees_decision = |a: &Decision, b: &Decision| {
            a.defer == b.defer && (a.defer || a.prediction == b.prediction)
        };

        let agrees_with_bayes = if near_tie {
            excluded += 1;
            None
        } else {
            let ok = agrees_decision(&decision, bayes_decision);
            if ok {
                agreements += 1;
            } else {
                disagreements.push(point.id);
            }
            Some(ok)
        };

        let agrees_with_entropy_rule = entropy_defer.map(|ed| {
            if near_tie {
                true // excluded from judgment; recorded for completeness
            } else {
                decision.defer == ed
            }
        });

        points.push(PointOutcome {
            id: point.id,
            decision,
            bayes: *bayes_decision,
            near_tie,
            agrees_with_bayes,
            entropy_defer,
            agrees_with_entropy_rule,
            converged,
            grad_norm,
            softmax_deviation,
        });
    }

    let judged = dist.points.len() - excluded;
    let agreement_fraction = if judged == 0 {
        1.0
    } else {
        agreements as f64 / judged as f64
    };
    Ok(ConsistencyReport {
        surrogate: surrogate.name(),
        total_points: dist.points.len(),
        excluded_near_ties: excluded,
        agreements_with_bayes: agreements,
        disagreements_with_bayes: disagreements,
        agreement_fraction,
        all_converged: points.iter().all(|p| p.converged),
        max_grad_norm: max_grad,
        max_softmax_deviation: max_dev,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn one_point(eta: Vec<f64>, pm: f64) -> DistributionSpec {
        DistributionSpec::new(vec![DistPoint {
            id: 0,
            mass: 1.0,
            eta,
            pm,
        }])
        .unwrap()
    }

    #[test]
    fn bayes_defers_when_expert_at_least_as_good() {
        let d = bayes_solution(&one_point(vec![0.6, 0.4], 0.7)).unwrap();
        assert!(d[0].defer);
        assert_eq!(d[0].prediction, 0);

        // Exact tie defers.
        let d = bayes_solution(&one_point(vec![0.5, 0.5], 0.5)).unwrap();
        assert!(d[0].defer);

        let d = bayes_solution(&one_point(vec![0.9, 0.1], 0.3)).unwrap();
        assert!(!d[0].defer);
    }

    #[test]
    fn argmin_breaks_ties_low() {
        assert_eq!(cost_sensitive_argmin(&[0.4, 0.2, 0.2]).unwrap(), 1);
        assert_eq!(cost_sensitive_argmin(&[0.1, 0.1]).unwrap(), 0);
        assert!(cost_sensitive_argmin(&[]).is_err());
        assert!(cost_sensitive_argmin(&[f64::NAN]).is_err());
    }

    #[test]
    fn population_minimizer_reference_point() {
        let p = lce_population_minimizer(&[0.8, 0.2], 0.9).unwrap();
        assert_close(p[0], 0.42105, 1e-5);
        assert_close(p[1], 0.10526, 1e-5);
        assert_close(p[2], 0.47368, 1e-5);
        assert_close(p.iter().sum::<f64>(), 1.0, 1e-12);
    }

    #[test]
    fn entropy_rejector_reference_decisions() {
        // Flat-but-decided posterior: entropy high enough to defer even
        // though the Bayes rule predicts (max eta = 0.5 > pm = 0.4).
        assert!(lmix_population_rejector(&[0.5, 0.25, 0.25], 0.4).unwrap());
        // Uniform binary posterior with a coin-flip expert defers.
        assert!(lmix_population_rejector(&[0.5, 0.5], 0.5).unwrap());
        // One-hot posterior never defers unless the expert is perfect.
        assert!(!lmix_population_rejector(&[1.0, 0.0], 0.99).unwrap());
        assert!(lmix_population_rejector(&[1.0, 0.0], 1.0).unwrap());
    }

    #[test]
    fn harness_matches_bayes_on_lce() {
        let spec = DistributionSpec::new(vec![
            DistPoint { id: 0, mass: 0.3, eta: vec![0.6, 0.4], pm: 0.7 },
            DistPoint { id: 1, mass: 0.3, eta: vec![0.9, 0.1], pm: 0.2 },
            DistPoint { id: 2, mass: 0.4, eta: vec![0.2, 0.8], pm: 0.5 },
        ])
        .unwrap();
        let report = verify_consistency(
            &spec,
            SurrogateKind::LceAlpha { alpha: 1.0 },
            &ConsistencyOptions::default(),
        )
        .unwrap();
        assert!(report.all_converged);
        assert_eq!(report.excluded_near_ties, 0);
        assert_close(report.agreement_fraction, 1.0, 0.0);
        assert!(report.max_softmax_deviation.unwrap() < 1e-3);
        assert!(report.max_grad_norm <= 1e-6);
    }

    #[test]
    fn harness_reproduces_mix_disagreement_witness() {
        let spec = one_point(vec![0.5, 0.25, 0.25], 0.4);
        let report =
            verify_consistency(&spec, SurrogateKind::Mix, &ConsistencyOptions::default()).unwrap();
        let point = &report.points[0];
        // The minimized mixture loss defers; Bayes predicts class 0.
        assert!(point.decision.defer);
        assert!(!point.bayes.defer);
        assert_eq!(point.agrees_with_bayes, Some(false));
        assert_eq!(point.entropy_defer, Some(true));
        assert_eq!(point.agrees_with_entropy_rule, Some(true));
        assert!(report.all_converged);
    }

    #[test]
    fn spec_validation_rejects_bad_masses_and_posteriors() {
        assert!(DistributionSpec::new(vec![]).is_err());
        assert!(DistributionSpec::new(vec![DistPoint {
            id: 0,
            mass: 0.5,
            eta: vec![0.5, 0.5],
            pm: 0.5
        }])
        .is_err());
        assert!(DistributionSpec::new(vec![DistPoint {
            id: 0,
            mass: 1.0,
            eta: vec![0.7, 0.7],
            pm: 0.5
        }])
        .is_err());
        assert!(DistributionSpec::new(vec![DistPoint {
            id: 0,
            mass: 1.0,
            eta: vec![0.5, 0.5],
            pm: 1.5
        }])
        .is_err());
    }
}
