//! Acceptance gates: one test per pinned release criterion. Every test
//! prints a `[PASS]`/`[FAIL] criterion N` line with the measured values
//! before asserting, so running with `--nocapture` renders the scoreboard
//! even for passing gates.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use deferral::core::argmax_tiebreak;
use deferral::data::gen_class_blobs;
use deferral::evaluation::{auroc, coverage_sweep, CoverageMetric};
use deferral::experts::{
    attach_expert_labels, expert_model_sample, fit_expert_model, Annotation, BehaviorMethod,
    ExpertBehaviorModel, ExpertSpec,
};
use deferral::losses::LossSelector;
use deferral::optim::{predict_or_defer, train_sgd, Architecture, TrainConfig};
use deferral::rng::stream;
use deferral_cli::config::ExperimentConfig;
use deferral_cli::experiments::run_experiment;
use deferral_cli::verify::{
    check_consistency, check_coverage_exactness, check_gradients, check_metric_oracles,
    check_mix_witness, check_upper_bound,
};

/// Seed for every gate in this file.
const ACCEPTANCE_SEED: u64 = 0;
/// Criterion 1: required range for mean(lce − confidence), percentage points.
const CONFIDENCE_GAP_RANGE_PP: (f64, f64) = (3.71, 9.06);
/// Criterion 1: wall-clock budget for the 200-trial comparison.
const TABLE1_RUNTIME_LIMIT_SECS: f64 = 300.0;
/// Criterion 2: |mean(lce − oracle)| bound, percentage points.
const ORACLE_GAP_MAX_ABS_PP: f64 = 2.2;
/// Criterion 10: refit sample count and allowed probability deviation.
const EXPERT_REFIT_SAMPLES: usize = 10_000;
const EXPERT_REFIT_TOL: f64 = 0.02;
/// Criterion 11: allowed shortfall against the best standalone baseline.
const SUBSTITUTE_SLACK: f64 = 0.005;

/// Prints the scoreboard line, then asserts, so the line is visible in the
/// captured output of a failing test.
fn report(criterion: usize, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {criterion} — {detail}");
    assert!(pass, "criterion {criterion}: {detail}");
}

// ---------------------------------------------------------------------------
// Criteria 1–3: one shared 200-trial two-group comparison at the defaults.
// ---------------------------------------------------------------------------

static TABLE1: OnceLock<(serde_json::Value, f64)> = OnceLock::new();

/// The default `gaussian_table1` run (200 trials, d = 10, 1000 train / 1000
/// test, linear models, seed 0) plus its wall-clock seconds.
fn table1() -> &'static (serde_json::Value, f64) {
    TABLE1.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
            "kind": "gaussian_table1",
            "seed": ACCEPTANCE_SEED,
            "out_dir": dir.path(),
        }))
        .unwrap();
        assert_eq!(cfg.trials, 200);
        assert_eq!(cfg.dim, 10);
        assert_eq!(cfg.n_train, 1000);
        assert_eq!(cfg.n_test, 1000);
        assert_eq!(cfg.architecture, "linear");
        let start = Instant::now();
        let out = run_experiment(&cfg).unwrap();
        (out.results, start.elapsed().as_secs_f64())
    })
}

fn table1_diff(baseline: &str) -> (f64, [f64; 2]) {
    let (results, _) = table1();
    let agg = &results["aggregates"]["accuracy_differences_pp"][format!("lce_minus_{baseline}")];
    (
        agg["mean"].as_f64().unwrap(),
        [agg["ci95"][0].as_f64().unwrap(), agg["ci95"][1].as_f64().unwrap()],
    )
}

#[test]
fn criterion_01_confidence_gap_within_pinned_range() {
    let (mean, _) = table1_diff("confidence");
    let (_, secs) = table1();
    let (lo, hi) = CONFIDENCE_GAP_RANGE_PP;
    let pass = mean >= lo && mean <= hi && *secs < TABLE1_RUNTIME_LIMIT_SECS;
    report(
        1,
        pass,
        &format!(
            "mean(lce − confidence) = {mean:.2} pp, required range [{lo}, {hi}] pp; \
             200 trials in {secs:.0} s (limit {TABLE1_RUNTIME_LIMIT_SECS:.0} s)"
        ),
    );
}

#[test]
fn criterion_02_oracle_gap_centered_near_zero() {
    let (mean, ci) = table1_diff("oracle");
    let pass = mean.abs() <= ORACLE_GAP_MAX_ABS_PP && ci[0] <= 0.0 && 0.0 <= ci[1];
    report(
        2,
        pass,
        &format!(
            "mean(lce − oracle) = {mean:.2} pp (|mean| bound {ORACLE_GAP_MAX_ABS_PP}), \
             95% CI [{:.2}, {:.2}] must contain 0",
            ci[0], ci[1]
        ),
    );
}

#[test]
fn criterion_03_beats_mixture_of_experts() {
    let (mean, ci) = table1_diff("mix_of_exp");
    let pass = mean > 0.0;
    report(
        3,
        pass,
        &format!(
            "mean(lce − mix_of_exp) = {mean:.2} pp (95% CI [{:.2}, {:.2}]), required > 0",
            ci[0], ci[1]
        ),
    );
}

// ---------------------------------------------------------------------------
// Criteria 4–9 reuse the verification-suite checks, so each tolerance has a
// single source of truth.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_surrogate_minimizer_matches_bayes_rule() {
    let outcome = check_consistency(ACCEPTANCE_SEED).unwrap();
    report(4, outcome.pass, &outcome.detail);
}

#[test]
fn criterion_05_surrogate_upper_bounds_system_loss() {
    let outcome = check_upper_bound(ACCEPTANCE_SEED).unwrap();
    report(5, outcome.pass, &outcome.detail);
}

#[test]
fn criterion_06_analytic_gradients_match_finite_differences() {
    let outcomes = check_gradients(ACCEPTANCE_SEED).unwrap();
    let failing: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| o.name.as_str())
        .collect();
    report(
        6,
        failing.is_empty(),
        &format!(
            "{} losses within tolerance{}",
            outcomes.len(),
            if failing.is_empty() {
                String::new()
            } else {
                format!("; failing: {failing:?}")
            }
        ),
    );
}

#[test]
fn criterion_07_mixture_surrogate_inconsistency_witness() {
    let outcome = check_mix_witness().unwrap();
    report(7, outcome.pass, &outcome.detail);
}

#[test]
fn criterion_08_ranking_metrics_match_definitional_oracles() {
    let outcome = check_metric_oracles(ACCEPTANCE_SEED).unwrap();
    report(8, outcome.pass, &outcome.detail);
}

#[test]
fn criterion_09_coverage_counts_and_endpoints_exact() {
    let counts = check_coverage_exactness(ACCEPTANCE_SEED).unwrap();

    // Endpoint metric equality: the c = 1 point must equal the pure
    // classifier's metric and the c = 0 point the pure expert's, bit for bit.
    let mut rng = stream(ACCEPTANCE_SEED, 40);
    let n = 160;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2usize)).collect();
    let classifier_preds: Vec<usize> = labels
        .iter()
        .map(|&y| if rng.gen_bool(0.7) { y } else { 1 - y })
        .collect();
    let expert_preds: Vec<usize> = labels
        .iter()
        .map(|&y| if rng.gen_bool(0.6) { y } else { 1 - y })
        .collect();
    // Half-integer scores force ties across both endpoints.
    let q: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-6..=6i32)) / 2.0).collect();

    let accuracy_of = |preds: &[usize]| -> f64 {
        preds.iter().zip(&labels).filter(|(p, y)| p == y).count() as f64 / n as f64
    };
    let auroc_of = |preds: &[usize]| -> f64 {
        let scores: Vec<f64> = preds.iter().map(|&p| f64::from(u8::from(p == 1))).collect();
        let truth: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        auroc(&scores, &truth).unwrap()
    };

    let mut endpoints_exact = true;
    for metric in [CoverageMetric::SystemAccuracy, CoverageMetric::Auroc] {
        let points = coverage_sweep(&q, &classifier_preds, &expert_preds, &labels, &[0.0, 1.0], metric)
            .unwrap();
        let (expert_only, classifier_only) = match metric {
            CoverageMetric::SystemAccuracy => (accuracy_of(&expert_preds), accuracy_of(&classifier_preds)),
            _ => (auroc_of(&expert_preds), auroc_of(&classifier_preds)),
        };
        endpoints_exact &= points[0].value == expert_only && points[1].value == classifier_only;
    }

    report(
        9,
        counts.pass && endpoints_exact,
        &format!(
            "{}; endpoint metrics {} the standalone expert/classifier values exactly",
            counts.detail,
            if endpoints_exact { "reproduce" } else { "DIVERGE FROM" }
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: behavior models refit from their own samples.
// ---------------------------------------------------------------------------

/// Annotations over two tasks whose exact per-label-vector frequencies are
/// multiples of 1/200, so the fitted reference probabilities are by
/// construction the designed ones. Task 1 depends on both label bits (a
/// pattern only the table can represent), task 2 on its own bit only.
fn designed_annotations() -> Vec<Annotation> {
    let mut annotations = Vec::new();
    for v in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
        let p1 = if v[0] == v[1] { 0.9 } else { 0.85 };
        let p2 = if v[1] == 0 { 0.85 } else { 0.9 };
        let n = 200;
        for i in 0..n {
            let e1 = u8::from((i as f64) < p1 * n as f64);
            let e2 = u8::from((i as f64) < p2 * n as f64);
            annotations.push((vec![v[0], v[1]], vec![e1, e2]));
        }
    }
    annotations
}

fn resample(model: &ExpertBehaviorModel, tag: u64) -> Vec<Annotation> {
    let vectors = [[0u8, 0], [0, 1], [1, 0], [1, 1]];
    let mut rng = stream(ACCEPTANCE_SEED, tag);
    (0..EXPERT_REFIT_SAMPLES)
        .map(|i| {
            let v = vectors[i % vectors.len()].to_vec();
            let e = expert_model_sample(model, &v, &mut rng).unwrap();
            (v, e)
        })
        .collect()
}

#[test]
fn criterion_10_expert_models_recover_their_own_probabilities() {
    let annotations = designed_annotations();
    let reference_table =
        fit_expert_model(BehaviorMethod::TableLookup, &annotations, ACCEPTANCE_SEED).unwrap();
    let reference_ccn =
        fit_expert_model(BehaviorMethod::Ccn, &annotations, ACCEPTANCE_SEED).unwrap();

    let refit_table =
        fit_expert_model(BehaviorMethod::TableLookup, &resample(&reference_table, 50), 0).unwrap();
    let refit_ccn = fit_expert_model(BehaviorMethod::Ccn, &resample(&reference_ccn, 51), 0).unwrap();

    let mut worst_table = 0.0f64;
    for v in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
        let a = reference_table.predict_proba(&v).unwrap();
        let b = refit_table.predict_proba(&v).unwrap();
        for (x, y) in a.iter().zip(&b) {
            worst_table = worst_table.max((x - y).abs());
        }
    }
    let mut worst_ccn = 0.0f64;
    for (a, b) in reference_ccn
        .ccn_parameters()
        .iter()
        .zip(refit_ccn.ccn_parameters())
    {
        for bit in 0..2 {
            worst_ccn = worst_ccn.max((a[bit] - b[bit]).abs());
        }
    }

    let pass = worst_table <= EXPERT_REFIT_TOL && worst_ccn <= EXPERT_REFIT_TOL;
    report(
        10,
        pass,
        &format!(
            "refit from {EXPERT_REFIT_SAMPLES} own samples: max table deviation {worst_table:.4}, \
             max ccn deviation {worst_ccn:.4} (tol {EXPERT_REFIT_TOL})"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: one-hidden-layer system on multiclass blobs.
// ---------------------------------------------------------------------------

const BLOB_CLASSES: usize = 4;
const BLOB_DIM: usize = 6;
const BLOB_TRIALS: u64 = 10;

fn blob_train_config(loss: LossSelector, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        epochs: 80,
        batch_size: 32,
        seed,
        loss,
        cosine_schedule: true,
        ..TrainConfig::default()
    }
}

/// Mean (system, classifier-alone, expert-alone) accuracy over seeded blob
/// trials with a `k`-perfect expert and one-hidden-layer models.
fn blob_accuracies(k: usize) -> (f64, f64, f64) {
    let arch = Architecture::OneHidden { width: 16 };
    let (mut sys, mut cls, mut exp) = (0.0, 0.0, 0.0);
    for trial in 0..BLOB_TRIALS {
        let seed = stream(ACCEPTANCE_SEED, 60 + trial).gen();
        let all = gen_class_blobs(BLOB_CLASSES, BLOB_DIM, 1200, 3.0, seed).unwrap();
        let train = all.subset(&(0..800).collect::<Vec<_>>()).unwrap();
        let test = all.subset(&(800..1200).collect::<Vec<_>>()).unwrap();
        let spec = ExpertSpec::KPerfect { k };
        let train = attach_expert_labels(&train, &spec, seed.wrapping_add(1)).unwrap();
        let test = attach_expert_labels(&test, &spec, seed.wrapping_add(2)).unwrap();

        let deferral_model = train_sgd(
            &train,
            arch,
            &blob_train_config(LossSelector::LceAlpha { alpha: 1.0 }, seed.wrapping_add(3)),
        )
        .unwrap()
        .model;
        let classifier = train_sgd(
            &train,
            arch,
            &blob_train_config(LossSelector::CrossEntropy, seed.wrapping_add(4)),
        )
        .unwrap()
        .model;

        let n = test.len() as f64;
        let (mut s, mut c, mut e) = (0usize, 0usize, 0usize);
        for ex in test.examples() {
            let m = ex.m.expect("expert labels attached");
            let d = predict_or_defer(&deferral_model, &ex.x, || Ok(m), 0.0).unwrap();
            s += usize::from(d.prediction == ex.y);
            let raw = classifier.forward_raw(&ex.x).unwrap();
            c += usize::from(argmax_tiebreak(&raw[..BLOB_CLASSES]).unwrap() == ex.y);
            e += usize::from(m == ex.y);
        }
        sys += s as f64 / n;
        cls += c as f64 / n;
        exp += e as f64 / n;
    }
    let t = BLOB_TRIALS as f64;
    (sys / t, cls / t, exp / t)
}

#[test]
fn criterion_11_one_hidden_system_dominates_and_gains_with_data() {
    let mut details = Vec::new();
    let mut dominates = true;
    for k in [0, BLOB_CLASSES / 2, BLOB_CLASSES] {
        let (sys, cls, exp) = blob_accuracies(k);
        let floor = cls.max(exp) - SUBSTITUTE_SLACK;
        dominates &= sys >= floor;
        details.push(format!(
            "k={k}: system {sys:.3} vs max(classifier {cls:.3}, expert {exp:.3}) − {SUBSTITUTE_SLACK}"
        ));
    }

    // Data-scaling analog: best system AU-ROC over the coverage grid must not
    // be worse with the full training set than with 5% of it.
    let dir = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = serde_json::from_value(serde_json::json!({
        "kind": "sample_complexity",
        "trials": 10,
        "seed": ACCEPTANCE_SEED,
        "num_classes": BLOB_CLASSES,
        "dim": BLOB_DIM,
        "n_train": 800,
        "n_test": 400,
        "spread": 3.0,
        "architecture": "one_hidden",
        "hidden_width": 16,
        "epochs": 40,
        "alpha": 1.0,
        "fractions": [0.05, 1.0],
        "expert_k": BLOB_CLASSES / 2,
        "out_dir": dir.path(),
    }))
    .unwrap();
    let out = run_experiment(&cfg).unwrap();
    let auroc_at = |task: &str| {
        out.results["aggregates"]["max_over_coverage_grid"]["ours"][task]["auroc"]["mean"]
            .as_f64()
            .unwrap()
    };
    let (small, full) = (auroc_at("frac_0.05"), auroc_at("frac_1"));
    let gains = full >= small;
    details.push(format!("auroc at 100% data {full:.3} vs at 5% {small:.3}"));

    report(11, dominates && gains, &details.join("; "));
}
