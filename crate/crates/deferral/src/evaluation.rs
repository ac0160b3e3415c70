//! System metrics, ranking metrics, deferral score baselines, and
//! coverage-constrained sweeps.
//!
//! Every rate with an empty denominator is reported as `None` (or as a
//! dedicated error for the ranking metrics), never silently as zero.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::core::softmax_stable;
use crate::error::{Error, Result};

/// One final decision of the combined classifier/expert system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemPrediction {
    pub prediction: usize,
    pub deferred: bool,
    pub label: usize,
    pub group: Option<bool>,
}

/// Aggregate metrics of a batch of system decisions. Binary rates (FPR, TPR,
/// F1) treat class 1 as positive — one-vs-rest for more than two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub n: usize,
    pub system_accuracy: f64,
    /// Fraction of examples answered by the classifier.
    pub coverage: f64,
    pub classifier_accuracy: Option<f64>,
    pub expert_accuracy: Option<f64>,
    pub fpr: Option<f64>,
    pub tpr: Option<f64>,
    pub f1: Option<f64>,
    /// Signed FPR gap between groups: FPR(group = true) − FPR(group = false).
    pub discrimination: Option<f64>,
}

/// Binary confusion rates of hard predictions against targets, with
/// positives = `true`. `None` marks an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinaryRates {
    pub fpr: Option<f64>,
    pub tpr: Option<f64>,
    pub f1: Option<f64>,
}

/// Confusion rates of `preds` against `targets` over paired bit vectors.
pub fn binary_rates(preds: &[bool], targets: &[bool]) -> Result<BinaryRates> {
    if preds.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "got {} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fnn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in preds.iter().zip(targets) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fnn += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let fpr = ratio(fp, fp + tn);
    let tpr = ratio(tp, tp + fnn);
    let precision = ratio(tp, tp + fp);
    let recall = tpr;
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(BinaryRates { fpr, tpr, f1 })
}

/// Computes the combined-system metrics. With `want_group_metrics` the signed
/// FPR gap between groups is included and every prediction must carry a group
/// bit; without it, group bits are ignored.
pub fn system_metrics(preds: &[SystemPrediction], want_group_metrics: bool) -> Result<SystemMetrics> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    if want_group_metrics && preds.iter().any(|p| p.group.is_none()) {
        return Err(Error::InvalidInput(
            "group metrics requested but some predictions carry no group bit".into(),
        ));
    }
    let n = preds.len();
    let correct = preds.iter().filter(|p| p.prediction == p.label).count();
    let deferred = preds.iter().filter(|p| p.deferred).count();
    let kept = n - deferred;
    let classifier_correct = preds
        .iter()
        .filter(|p| !p.deferred && p.prediction == p.label)
        .count();
    let expert_correct = preds
        .iter()
        .filter(|p| p.deferred && p.prediction == p.label)
        .count();

    let hard: Vec<bool> = preds.iter().map(|p| p.prediction == 1).collect();
    let truth: Vec<bool> = preds.iter().map(|p| p.label == 1).collect();
    let rates = binary_rates(&hard, &truth)?;

    let discrimination = if want_group_metrics {
        let fpr_of = |side: bool| -> Result<Option<f64>> {
            let idx: Vec<usize> = (0..n).filter(|&i| preds[i].group == Some(side)).collect();
            let p: Vec<bool> = idx.iter().map(|&i| hard[i]).collect();
            let t: Vec<bool> = idx.iter().map(|&i| truth[i]).collect();
            Ok(binary_rates(&p, &t)?.fpr)
        };
        match (fpr_of(true)?, fpr_of(false)?) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        }
    } else {
        None
    };

    Ok(SystemMetrics {
        n,
        system_accuracy: correct as f64 / n as f64,
        coverage: kept as f64 / n as f64,
        classifier_accuracy: (kept > 0).then(|| classifier_correct as f64 / kept as f64),
        expert_accuracy: (deferred > 0).then(|| expert_correct as f64 / deferred as f64),
        fpr: rates.fpr,
        tpr: rates.tpr,
        f1: rates.f1,
        discrimination,
    })
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(score_pos > score_neg) + ½·P(tie)`, computed via midranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::InvalidInput(format!(
            "got {} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AU-ROC needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Midranks over tie groups; the positive rank-sum gives the statistic.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Area under the precision-recall curve with step-wise precision: the curve
/// is evaluated at every distinct score threshold and integrated as
/// `Σ (R_t − R_{t−1}) · P_t` with no linear interpolation between points.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::InvalidInput(format!(
            "got {} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let total_pos = labels.iter().filter(|&&l| l).count();
    if total_pos == 0 {
        return Err(Error::UndefinedMetric(
            "AU-PR needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut area = 0.0;
    let mut tp = 0usize;
    let mut predicted = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            predicted += 1;
            if labels[idx] {
                tp += 1;
            }
        }
        let precision = tp as f64 / predicted as f64;
        let recall = tp as f64 / total_pos as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(area)
}

/// How to turn model outputs into a scalar deferral score `q` (defer the
/// largest-`q` examples first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    /// `q = g_bot − max_y g_y` over deferral-convention outputs.
    Ours,
    /// `q = 1 − max softmax probability` at the given temperature.
    ModelConfidence,
    /// `q = P(expert correct) − max softmax probability`, both calibrated.
    Confidence,
}

/// Computes per-example deferral scores. `Ours` expects deferral-convention
/// rows (deferral score last) and ignores the temperature; the other two
/// softmax the rows as given after dividing by `temperature`. `Confidence`
/// additionally needs calibrated expert-correctness probabilities.
pub fn deferral_scores(
    method: ScoreMethod,
    outputs: &[Vec<f64>],
    temperature: f64,
    expert_correct_probs: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if outputs.is_empty() {
        return Err(Error::InvalidInput("no model outputs".into()));
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    match method {
        ScoreMethod::Ours => outputs
            .iter()
            .map(|row| Ok(crate::core::ScoreVector::new(row.clone())?.deferral_margin()))
            .collect(),
        ScoreMethod::ModelConfidence => outputs
            .iter()
            .map(|row| {
                let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
                let p = softmax_stable(&scaled)?;
                Ok(1.0 - p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            })
            .collect(),
        ScoreMethod::Confidence => {
            let expert = expert_correct_probs.ok_or_else(|| {
                Error::InvalidInput(
                    "confidence scoring needs expert-correctness probabilities".into(),
                )
            })?;
            if expert.len() != outputs.len() {
                return Err(Error::InvalidInput(format!(
                    "got {} expert probabilities for {} outputs",
                    expert.len(),
                    outputs.len()
                )));
            }
            outputs
                .iter()
                .zip(expert)
                .map(|(row, &pe)| {
                    let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
                    let p = softmax_stable(&scaled)?;
                    Ok(pe - p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                })
                .collect()
        }
    }
}

/// Metric evaluated on the combined predictions at each coverage level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMetric {
    SystemAccuracy,
    /// AU-ROC of the hard combined predictions against `label = 1`.
    Auroc,
    /// F1 of the hard combined predictions with class 1 positive.
    F1,
}

impl CoverageMetric {
    pub fn name(&self) -> &'static str {
        match self {
            CoverageMetric::SystemAccuracy => "system_accuracy",
            CoverageMetric::Auroc => "auroc",
            CoverageMetric::F1 => "f1",
        }
    }
}

/// One evaluated point of a coverage curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub coverage: f64,
    pub metric: String,
    pub value: f64,
}

/// A tagged coverage curve, one per (method, task, trial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub method: String,
    pub task: String,
    pub seed: u64,
    pub trial: u64,
    pub points: Vec<CoveragePoint>,
}

impl CoverageCurve {
    pub fn validate(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if w[1].coverage <= w[0].coverage {
                return Err(Error::InvalidInput(
                    "coverage points must be strictly increasing".into(),
                ));
            }
        }
        if self
            .points
            .iter()
            .any(|p| !p.value.is_finite() || !(0.0..=1.0).contains(&p.coverage))
        {
            return Err(Error::InvalidInput(
                "coverage points must be finite with coverage in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// For target coverage `c` over `n` examples, defers exactly
/// `round((1 − c) · n)` examples — those with the largest `q`, ties broken by
/// lower index first. Guarantees exact counts and nested deferral sets.
pub fn deferral_set(q: &[f64], coverage: f64) -> Result<Vec<usize>> {
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("deferral scores must be finite".into()));
    }
    if !(0.0..=1.0).contains(&coverage) {
        return Err(Error::InvalidInput(format!(
            "coverage must lie in [0, 1], got {coverage}"
        )));
    }
    let n = q.len();
    let n_defer = ((1.0 - coverage) * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        q[b].partial_cmp(&q[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut deferred: Vec<usize> = order.into_iter().take(n_defer).collect();
    deferred.sort_unstable();
    Ok(deferred)
}

/// Sweeps the coverage grid, building combined predictions at each target and
/// scoring them with `metric`. The grid must be strictly increasing inside
/// `[0, 1]`.
pub fn coverage_sweep(
    q: &[f64],
    classifier_preds: &[usize],
    expert_preds: &[usize],
    labels: &[usize],
    grid: &[f64],
    metric: CoverageMetric,
) -> Result<Vec<CoveragePoint>> {
    let n = q.len();
    if n == 0 || classifier_preds.len() != n || expert_preds.len() != n || labels.len() != n {
        return Err(Error::InvalidInput(
            "scores, predictions, and labels must be non-empty and aligned".into(),
        ));
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidInput(
                "coverage grid must be strictly increasing".into(),
            ));
        }
    }
    let mut points = Vec::with_capacity(grid.len());
    for &c in grid {
        let deferred = deferral_set(q, c)?;
        let mut is_deferred = vec![false; n];
        for &i in &deferred {
            is_deferred[i] = true;
        }
        let combined: Vec<usize> = (0..n)
            .map(|i| if is_deferred[i] { expert_preds[i] } else { classifier_preds[i] })
            .collect();
        let value = match metric {
            CoverageMetric::SystemAccuracy => {
                combined.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / n as f64
            }
            CoverageMetric::Auroc => {
                let scores: Vec<f64> = combined.iter().map(|&p| (p == 1) as u8 as f64).collect();
                let truth: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
                auroc(&scores, &truth)?
            }
            CoverageMetric::F1 => {
                let hard: Vec<bool> = combined.iter().map(|&p| p == 1).collect();
                let truth: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
                binary_rates(&hard, &truth)?.f1.ok_or_else(|| {
                    Error::UndefinedMetric("F1 undefined: no true or predicted positives".into())
                })?
            }
        };
        points.push(CoveragePoint {
            coverage: c,
            metric: metric.name().to_string(),
            value,
        });
    }
    Ok(points)
}

/// What the oracle rejector should learn to recognize as the
/// expert-competent region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleTarget {
    /// The group bit marks expert competence (defer on group = true).
    GroupBit,
    /// The expert is perfect on classes `0..k` (defer there).
    PerfectRegion { k: usize },
}

/// Trains a binary rejector that predicts membership in the expert-competent
/// region; deferral = predicted membership (class 1). Degenerate single-class
/// targets train fine and yield an always-one-way rejector.
pub fn learned_oracle_rejector(
    data: &crate::core::DeferralDataset,
    target: OracleTarget,
    architecture: crate::optim::Architecture,
    cfg: &crate::optim::TrainConfig,
) -> Result<crate::optim::DeferralModel> {
    let mut relabeled = Vec::with_capacity(data.len());
    for ex in data.examples() {
        let bit = match target {
            OracleTarget::GroupBit => ex.group.ok_or_else(|| {
                Error::InvalidInput("oracle rejector needs group bits on every example".into())
            })?,
            OracleTarget::PerfectRegion { k } => ex.y < k,
        };
        relabeled.push(crate::core::Example::new(ex.x.clone(), bit as usize));
    }
    let rejector_data =
        crate::core::DeferralDataset::with_mask(relabeled, data.mask().to_vec(), 2)?;
    let cfg = cfg.clone().with_loss(crate::losses::LossSelector::CrossEntropy);
    Ok(crate::optim::train_sgd(&rejector_data, architecture, &cfg)?.model)
}

/// Writes curves in the plotting schema: `method,task,coverage,metric,value,seed,trial`.
pub fn write_curves_csv(path: &Path, curves: &[CoverageCurve]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "method,task,coverage,metric,value,seed,trial")?;
    for curve in curves {
        curve.validate()?;
        for p in &curve.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                curve.method, curve.task, p.coverage, p.metric, p.value, curve.seed, curve.trial
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn pred(prediction: usize, deferred: bool, label: usize) -> SystemPrediction {
        SystemPrediction {
            prediction,
            deferred,
            label,
            group: None,
        }
    }

    #[test]
    fn all_correct_none_deferred() {
        let preds: Vec<_> = (0..4).map(|i| pred(i % 2, false, i % 2)).collect();
        let m = system_metrics(&preds, false).unwrap();
        assert_close(m.system_accuracy, 1.0, 0.0);
        assert_close(m.coverage, 1.0, 0.0);
        assert_eq!(m.expert_accuracy, None);
        assert_eq!(m.discrimination, None);
    }

    #[test]
    fn half_deferred_split_accuracy() {
        // Expert always right on the deferred half, classifier always wrong.
        let mut preds = Vec::new();
        for _ in 0..5 {
            preds.push(pred(1, true, 1)); // deferred, correct
            preds.push(pred(0, false, 1)); // kept, wrong
        }
        let m = system_metrics(&preds, false).unwrap();
        assert_close(m.system_accuracy, 0.5, 0.0);
        assert_close(m.coverage, 0.5, 0.0);
        assert_close(m.classifier_accuracy.unwrap(), 0.0, 0.0);
        assert_close(m.expert_accuracy.unwrap(), 1.0, 0.0);
    }

    #[test]
    fn discrimination_is_signed_fpr_gap() {
        // Group true: 10 negatives, 3 false positives (FPR 0.3).
        // Group false: 10 negatives, 1 false positive (FPR 0.1).
        let mut preds = Vec::new();
        for i in 0..10 {
            preds.push(SystemPrediction {
                prediction: (i < 3) as usize,
                deferred: false,
                label: 0,
                group: Some(true),
            });
            preds.push(SystemPrediction {
                prediction: (i < 1) as usize,
                deferred: false,
                label: 0,
                group: Some(false),
            });
        }
        let m = system_metrics(&preds, true).unwrap();
        assert_close(m.discrimination.unwrap(), 0.2, 1e-12);

        let mut missing = preds.clone();
        missing[0].group = None;
        assert!(matches!(
            system_metrics(&missing, true),
            Err(Error::InvalidInput(_))
        ));
        // Without the request, missing bits are fine.
        assert!(system_metrics(&missing, false).is_ok());
    }

    #[test]
    fn auroc_known_values() {
        let labels = [true, true, false, false];
        assert_close(auroc(&[0.9, 0.8, 0.3, 0.1], &labels).unwrap(), 1.0, 0.0);
        let mixed = [true, false, false, true];
        assert_close(auroc(&[0.9, 0.8, 0.3, 0.1], &mixed).unwrap(), 0.5, 1e-15);
        assert_close(auroc(&[0.7, 0.7, 0.7, 0.7], &labels).unwrap(), 0.5, 0.0);
        assert!(matches!(
            auroc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn aupr_known_values() {
        let labels = [true, true, false, false];
        assert_close(aupr(&[0.9, 0.8, 0.3, 0.1], &labels).unwrap(), 1.0, 0.0);
        // Constant scores: one curve point with precision = prevalence.
        assert_close(aupr(&[0.5; 4], &labels).unwrap(), 0.5, 0.0);
        // Alternating ranking, enumerated by hand over all four thresholds.
        let alt = [true, false, true, false];
        assert_close(aupr(&[0.9, 0.8, 0.3, 0.1], &alt).unwrap(), 5.0 / 6.0, 1e-15);
        assert!(matches!(
            aupr(&[0.1, 0.2], &[false, false]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn deferral_score_conventions() {
        let q = deferral_scores(ScoreMethod::Ours, &[vec![0.0, 0.0, 0.0]], 1.0, None).unwrap();
        assert_close(q[0], 0.0, 0.0);

        let q = deferral_scores(ScoreMethod::ModelConfidence, &[vec![0.3, 0.3]], 1.0, None).unwrap();
        assert_close(q[0], 0.5, 1e-12);

        // Softmax (0.6, 0.4) from logits (ln 0.6, ln 0.4); expert prob 0.9.
        let logits = vec![vec![0.6f64.ln(), 0.4f64.ln()]];
        let q = deferral_scores(ScoreMethod::Confidence, &logits, 1.0, Some(&[0.9])).unwrap();
        assert_close(q[0], 0.3, 1e-12);

        assert!(matches!(
            deferral_scores(ScoreMethod::Confidence, &logits, 1.0, None),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn coverage_endpoints_and_exact_counts() {
        let q = [0.1, 0.4, 0.2, 0.3];
        let classifier = [0, 0, 1, 1];
        let expert = [1, 1, 0, 0];
        let labels = [1, 1, 0, 0];

        assert_eq!(deferral_set(&q, 1.0).unwrap(), Vec::<usize>::new());
        assert_eq!(deferral_set(&q, 0.0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(deferral_set(&q, 0.5).unwrap(), vec![1, 3]);

        let grid = [0.0, 0.5, 1.0];
        let points = coverage_sweep(&q, &classifier, &expert, &labels, &grid, CoverageMetric::SystemAccuracy).unwrap();
        // c=0: expert everywhere -> all correct; c=1: classifier -> all wrong.
        assert_close(points[0].value, 1.0, 0.0);
        assert_close(points[2].value, 0.0, 0.0);
        // c=0.5 defers {1,3}: the expert is right on both, the classifier is
        // wrong on the kept {0,2}.
        assert_close(points[1].value, 0.5, 0.0);
    }

    #[test]
    fn deferral_sets_nest() {
        let q = [0.5, 0.1, 0.5, 0.9, 0.2, 0.5];
        let mut prev: Vec<usize> = Vec::new();
        for c in (0..=10).rev().map(|i| i as f64 / 10.0) {
            let cur = deferral_set(&q, c).unwrap();
            assert!(prev.iter().all(|i| cur.contains(i)), "not nested at c={c}");
            prev = cur;
        }
    }

    #[test]
    fn curves_csv_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        let curve = CoverageCurve {
            method: "ours".into(),
            task: "toy".into(),
            seed: 7,
            trial: 0,
            points: vec![
                CoveragePoint {
                    coverage: 0.5,
                    metric: "system_accuracy".into(),
                    value: 0.75,
                },
                CoveragePoint {
                    coverage: 1.0,
                    metric: "system_accuracy".into(),
                    value: 0.5,
                },
            ],
        };
        write_curves_csv(&path, &[curve]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "method,task,coverage,metric,value,seed,trial");
        assert_eq!(lines.next().unwrap(), "ours,toy,0.5,system_accuracy,0.75,7,0");
    }
}
