//! The `defer verify` suite: self-contained runtime checks of the library's
//! analytic guarantees, each reporting a pass/fail line. Runs with built-in
//! defaults — no configuration or data files required.
//!
//! Tolerances are pinned here as constants; tests reuse the same check
//! functions so there is exactly one source of truth for each threshold.

use anyhow::Result;
use rand::Rng;

use deferral::bayes::{
    bayes_solution, lmix_population_rejector, verify_consistency, ConsistencyOptions, DistPoint,
    DistributionSpec, SurrogateKind,
};
use deferral::core::ScoreVector;
use deferral::evaluation::{aupr, auroc, deferral_set};
use deferral::losses::{eval_lce_alpha, eval_loss_01};
use deferral::optim::{grad_check, grad_check_fn, LossUnderTest, GRAD_CHECK_TOL};
use deferral::rng::stream;

use crate::experiments::random_distribution;

/// Finite-difference probes per loss.
pub const GRAD_PROBES: usize = 1000;
/// Random draws for the surrogate-vs-system-loss bound.
pub const BOUND_DRAWS: usize = 100_000;
/// Random finite distributions for the consistency sweep.
pub const CONSISTENCY_DISTRIBUTIONS: usize = 100;
/// Allowed distance between the optimized softmax and its closed form.
pub const SOFTMAX_TOL: f64 = 1e-3;
/// Allowed error of the ranking metrics against their definitional oracles.
pub const METRIC_ORACLE_TOL: f64 = 1e-12;
/// Random score/label instances for the ranking-metric oracles.
pub const METRIC_ORACLE_INSTANCES: usize = 200;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

/// Runs every check, in a fixed order, against streams of `seed`.
pub fn run_verification_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut outcomes = check_gradients(seed)?;
    outcomes.push(check_gradient_negative_control(seed));
    outcomes.push(check_upper_bound(seed)?);
    outcomes.push(check_consistency(seed)?);
    outcomes.push(check_mix_witness()?);
    outcomes.push(check_metric_oracles(seed)?);
    outcomes.push(check_coverage_exactness(seed)?);
    Ok(outcomes)
}

/// One aligned pass/fail line per check.
pub fn render_table(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    outcomes
        .iter()
        .map(|o| {
            format!(
                "[{}] {:width$}  {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.name,
                o.detail,
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Analytic gradients of every loss against central differences.
pub fn check_gradients(seed: u64) -> Result<Vec<CheckOutcome>> {
    let losses = [
        ("grad lce alpha=1", LossUnderTest::LceAlpha { alpha: 1.0 }),
        ("grad lce alpha=0.3", LossUnderTest::LceAlpha { alpha: 0.3 }),
        ("grad lce cost-sensitive", LossUnderTest::LceCostSensitive),
        (
            "grad mix",
            LossUnderTest::Mix {
                block_classifier_gradient: false,
            },
        ),
        (
            "grad mix blocked",
            LossUnderTest::Mix {
                block_classifier_gradient: true,
            },
        ),
        ("grad lsh binary", LossUnderTest::LshBinary),
    ];
    losses
        .iter()
        .enumerate()
        .map(|(i, (name, loss))| {
            let report = grad_check(*loss, GRAD_PROBES, seed.wrapping_add(i as u64))?;
            Ok(CheckOutcome::new(
                name,
                report.pass,
                format!(
                    "max rel err {:.3e} over {} probes (tol {:.0e})",
                    report.max_rel_err, report.probes, GRAD_CHECK_TOL
                ),
            ))
        })
        .collect()
}

/// The harness itself must flag a deliberately corrupted gradient; a checker
/// that waves this through would pass anything.
pub fn check_gradient_negative_control(seed: u64) -> CheckOutcome {
    let report = grad_check_fn(4, 50, seed, |x| {
        let value = x.iter().map(|v| v * v).sum::<f64>();
        let corrupted = x.iter().map(|v| 2.0 * v + 0.05).collect();
        (value, corrupted)
    });
    CheckOutcome::new(
        "grad negative control",
        !report.pass,
        format!(
            "corrupted gradient reported max rel err {:.3e}; harness {} it",
            report.max_rel_err,
            if report.pass { "missed" } else { "caught" },
        ),
    )
}

/// The α = 1 surrogate must dominate the 0-1 system loss everywhere.
pub fn check_upper_bound(seed: u64) -> Result<CheckOutcome> {
    let mut rng = stream(seed, 1);
    let mut violations = 0usize;
    let mut worst_gap = f64::INFINITY;
    for _ in 0..BOUND_DRAWS {
        let k = rng.gen_range(2..=6usize);
        let raw: Vec<f64> = (0..=k).map(|_| rng.gen_range(-40.0..40.0)).collect();
        let y = rng.gen_range(0..k);
        let m = rng.gen_range(0..k);
        let scores = ScoreVector::new(raw)?;
        let zero_one = eval_loss_01(&scores, y, m)?;
        let surrogate = eval_lce_alpha(&scores, y, m, 1.0)?.value;
        worst_gap = worst_gap.min(surrogate - zero_one);
        if surrogate < zero_one {
            violations += 1;
        }
    }
    Ok(CheckOutcome::new(
        "surrogate upper bound",
        violations == 0,
        format!("{violations} violations in {BOUND_DRAWS} draws (smallest margin {worst_gap:.3e})"),
    ))
}

/// Minimizing the α = 1 surrogate on random finite distributions must
/// recover the Bayes rule away from ties and land on the closed-form
/// softmax.
pub fn check_consistency(seed: u64) -> Result<CheckOutcome> {
    let opts = ConsistencyOptions::default();
    let mut disagreements = 0usize;
    let mut worst_softmax: f64 = 0.0;
    let mut unconverged = 0usize;
    for i in 0..CONSISTENCY_DISTRIBUTIONS {
        let dist = random_distribution(seed.wrapping_add(i as u64))?;
        let report = verify_consistency(&dist, SurrogateKind::LceAlpha { alpha: 1.0 }, &opts)?;
        disagreements += report.disagreements_with_bayes.len();
        worst_softmax = worst_softmax.max(report.max_softmax_deviation.unwrap_or(0.0));
        if !report.all_converged {
            unconverged += 1;
        }
    }
    let pass = disagreements == 0 && worst_softmax <= SOFTMAX_TOL && unconverged == 0;
    Ok(CheckOutcome::new(
        "bayes consistency",
        pass,
        format!(
            "{disagreements} disagreements over {CONSISTENCY_DISTRIBUTIONS} distributions, \
             max softmax deviation {worst_softmax:.3e} (tol {SOFTMAX_TOL:.0e}), \
             {unconverged} unconverged",
        ),
    ))
}

/// The mixture surrogate's known failure point: at eta = (0.5, 0.25, 0.25),
/// pm = 0.4 its population rejector defers even though the Bayes rule keeps
/// the point (max eta > pm).
pub fn check_mix_witness() -> Result<CheckOutcome> {
    let eta = [0.5, 0.25, 0.25];
    let pm = 0.4;
    let dist = DistributionSpec::new(vec![DistPoint {
        id: 0,
        mass: 1.0,
        eta: eta.to_vec(),
        pm,
    }])?;
    let bayes = &bayes_solution(&dist)?[0];
    let mix_defers = lmix_population_rejector(&eta, pm)?;
    let report = verify_consistency(&dist, SurrogateKind::Mix, &ConsistencyOptions::default())?;
    let optimized_defers = report.points[0].decision.defer;
    let pass = !bayes.defer && mix_defers && optimized_defers;
    Ok(CheckOutcome::new(
        "mix inconsistency witness",
        pass,
        format!(
            "bayes defer={}, closed-form mix defer={}, optimized mix defer={}",
            bayes.defer, mix_defers, optimized_defers,
        ),
    ))
}

/// AU-ROC against the pairwise-comparison oracle and AU-PR against the
/// definitional threshold enumeration, on random instances with deliberate
/// ties.
pub fn check_metric_oracles(seed: u64) -> Result<CheckOutcome> {
    let mut rng = stream(seed, 2);
    let mut worst = 0.0f64;
    for _ in 0..METRIC_ORACLE_INSTANCES {
        let n = rng.gen_range(5..=50usize);
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.gen_range(-5..=5i32) as f64) / 2.0)
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        // Both classes must appear for either metric to be defined.
        labels[0] = true;
        labels[1] = false;
        worst = worst.max((auroc(&scores, &labels)? - auroc_pairwise(&scores, &labels)).abs());
        worst = worst.max((aupr(&scores, &labels)? - aupr_enumerated(&scores, &labels)).abs());
    }
    Ok(CheckOutcome::new(
        "ranking metric oracles",
        worst <= METRIC_ORACLE_TOL,
        format!(
            "max |metric - oracle| {worst:.3e} over {METRIC_ORACLE_INSTANCES} instances \
             (tol {METRIC_ORACLE_TOL:.0e})"
        ),
    ))
}

/// O(n^2) definitional AU-ROC: fraction of positive/negative pairs ranked
/// correctly, ties counting half.
fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Definitional AU-PR: precision and recall recomputed from scratch at every
/// distinct threshold (descending), step-integrated with no interpolation.
fn aupr_enumerated(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    thresholds.dedup();
    let total_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let predicted = scores.iter().filter(|&&s| s >= t).count() as f64;
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| s >= t && l)
            .count() as f64;
        let recall = tp / total_pos;
        area += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    area
}

/// `deferral_set` must defer exactly `round((1 - c) * n)` examples at every
/// grid coverage, keep everyone at c = 1, and defer everyone at c = 0.
pub fn check_coverage_exactness(seed: u64) -> Result<CheckOutcome> {
    let mut rng = stream(seed, 3);
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for n in [1usize, 7, 100, 333] {
        // Half-integer scores force ties so the cut must break them stably.
        let q: Vec<f64> = (0..n)
            .map(|_| (rng.gen_range(-6..=6i32) as f64) / 2.0)
            .collect();
        for step in 0..=100u32 {
            let coverage = f64::from(step) / 100.0;
            let set = deferral_set(&q, coverage)?;
            let expected = ((1.0 - coverage) * n as f64).round() as usize;
            checked += 1;
            if set.len() != expected {
                mismatches += 1;
            }
        }
        if !deferral_set(&q, 1.0)?.is_empty() || deferral_set(&q, 0.0)?.len() != n {
            mismatches += 1;
        }
    }
    Ok(CheckOutcome::new(
        "coverage exactness",
        mismatches == 0,
        format!("{mismatches} mismatches over {checked} grid points plus endpoints"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_runs_and_every_check_passes() {
        let outcomes = run_verification_suite(11).unwrap();
        assert_eq!(outcomes.len(), 12);
        for o in &outcomes {
            assert!(o.pass, "{} failed: {}", o.name, o.detail);
        }
    }

    #[test]
    fn table_has_one_line_per_check() {
        let outcomes = vec![
            CheckOutcome::new("a", true, "fine".into()),
            CheckOutcome::new("b", false, "broken".into()),
        ];
        let table = render_table(&outcomes);
        assert_eq!(table.lines().count(), 2);
        assert!(table.contains("[PASS] a"));
        assert!(table.contains("[FAIL] b"));
    }

    #[test]
    fn oracle_helpers_agree_on_a_hand_example() {
        // scores: pos {3, 1}, neg {2, 1} -> pairs: (3>2)=1, (3>1)=1, (1<2)=0,
        // (1=1)=0.5 -> 2.5/4.
        let scores = [3.0, 1.0, 2.0, 1.0];
        let labels = [true, true, false, false];
        assert!((auroc_pairwise(&scores, &labels) - 0.625).abs() < 1e-15);
        // thresholds 3, 2, 1: P=1 R=1/2; P=1/2 R=1/2; P=1/2 R=1 ->
        // 0.5*1 + 0 + 0.5*0.5 = 0.75.
        assert!((aupr_enumerated(&scores, &labels) - 0.75).abs() < 1e-15);
    }
}
