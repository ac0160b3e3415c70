//! Expert simulators, expert-behavior models learned from annotation tuples,
//! and expert-label imputation for partially labeled data.
//!
//! Simulators take an explicit RNG stream per caller; fitted behavior models
//! are immutable, so concurrent sampling with independent streams is safe.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::core::{DeferralDataset, Example};
use crate::error::{Error, Result};
use crate::evaluation::{auroc, binary_rates};
use crate::losses::LossSelector;
use crate::optim::{train_sgd, Architecture, DeferralModel, TrainConfig};
use crate::rng::stream;

/// A simulated expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertSpec {
    /// Perfect on classes `0..k`, uniform over all `K` classes elsewhere.
    KPerfect { k: usize },
    /// Correct with probability `p` on group-true examples and `q` on the
    /// rest. Errors flip the label for `K = 2` and are uniform over the
    /// `K − 1` wrong labels for larger `K`.
    GroupPq { p: f64, q: f64 },
    /// Samples proportionally to a per-example class-count vector.
    EmpiricalCounts { counts: Vec<Vec<f64>> },
    /// The optimal rule for group-true data under two Gaussian classes with
    /// equal priors: a linear discriminant over the true group parameters
    /// with the pooled diagonal covariance.
    Group1Bayes {
        mean0: Vec<f64>,
        mean1: Vec<f64>,
        var0: Vec<f64>,
        var1: Vec<f64>,
    },
}

impl ExpertSpec {
    /// Builds the group-true linear-discriminant expert, validating shapes
    /// and strictly positive variances.
    pub fn group1_bayes(mean0: Vec<f64>, mean1: Vec<f64>, var0: Vec<f64>, var1: Vec<f64>) -> Result<Self> {
        let d = mean0.len();
        if d == 0 || mean1.len() != d || var0.len() != d || var1.len() != d {
            return Err(Error::InvalidInput(
                "discriminant parameters must share one non-zero dimension".into(),
            ));
        }
        let all = mean0.iter().chain(&mean1).chain(&var0).chain(&var1);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("discriminant parameters must be finite".into()));
        }
        if var0.iter().chain(&var1).any(|&v| v <= 0.0) {
            return Err(Error::InvalidInput("variances must be strictly positive".into()));
        }
        Ok(ExpertSpec::Group1Bayes {
            mean0,
            mean1,
            var0,
            var1,
        })
    }

    /// Checks the spec against a dataset shape before any prediction.
    pub fn validate(&self, num_classes: usize, num_examples: usize, dim: usize) -> Result<()> {
        match self {
            ExpertSpec::KPerfect { k } => {
                if *k > num_classes {
                    return Err(Error::InvalidInput(format!(
                        "k = {k} exceeds the class count {num_classes}"
                    )));
                }
            }
            ExpertSpec::GroupPq { p, q } => {
                for (name, v) in [("p", *p), ("q", *q)] {
                    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                        return Err(Error::InvalidInput(format!(
                            "{name} must be a probability, got {v}"
                        )));
                    }
                }
            }
            ExpertSpec::EmpiricalCounts { counts } => {
                if counts.len() != num_examples {
                    return Err(Error::InvalidInput(format!(
                        "{} count vectors for {num_examples} examples",
                        counts.len()
                    )));
                }
                for (i, row) in counts.iter().enumerate() {
                    if row.len() != num_classes {
                        return Err(Error::InvalidInput(format!(
                            "count vector {i} has {} entries, expected {num_classes}",
                            row.len()
                        )));
                    }
                    if row.iter().any(|&c| !c.is_finite() || c < 0.0) || row.iter().sum::<f64>() <= 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "count vector {i} must be non-negative with positive total"
                        )));
                    }
                }
            }
            ExpertSpec::Group1Bayes { mean0, .. } => {
                if num_classes != 2 {
                    return Err(Error::InvalidInput(
                        "the discriminant expert is binary-only".into(),
                    ));
                }
                if mean0.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "discriminant dimension {} does not match data dimension {dim}",
                        mean0.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One expert prediction. `example_index` addresses the count vector for
/// `EmpiricalCounts` and is ignored otherwise.
pub fn expert_predict(
    spec: &ExpertSpec,
    example: &Example,
    example_index: usize,
    num_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    match spec {
        ExpertSpec::KPerfect { k } => {
            if *k > num_classes {
                return Err(Error::InvalidInput(format!(
                    "k = {k} exceeds the class count {num_classes}"
                )));
            }
            if example.y < *k {
                Ok(example.y)
            } else {
                Ok(rng.gen_range(0..num_classes))
            }
        }
        ExpertSpec::GroupPq { p, q } => {
            let group = example.group.ok_or_else(|| {
                Error::InvalidInput("group_pq expert needs a group bit on the example".into())
            })?;
            let correct_prob = if group { *p } else { *q };
            if rng.gen_range(0.0..1.0) < correct_prob {
                Ok(example.y)
            } else if num_classes == 2 {
                Ok(1 - example.y)
            } else {
                // Uniform over the wrong labels.
                let r = rng.gen_range(0..num_classes - 1);
                Ok(if r >= example.y { r + 1 } else { r })
            }
        }
        ExpertSpec::EmpiricalCounts { counts } => {
            let row = counts.get(example_index).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "no count vector for example {example_index} ({} available)",
                    counts.len()
                ))
            })?;
            if row.len() != num_classes {
                return Err(Error::InvalidInput(format!(
                    "count vector has {} entries for {num_classes} classes",
                    row.len()
                )));
            }
            let total: f64 = row.iter().sum();
            if total <= 0.0 || row.iter().any(|&c| c < 0.0 || !c.is_finite()) {
                return Err(Error::InvalidInput(
                    "count vector must be non-negative with positive total".into(),
                ));
            }
            let u = rng.gen_range(0.0..total);
            let mut acc = 0.0;
            for (j, &c) in row.iter().enumerate() {
                acc += c;
                if u < acc {
                    return Ok(j);
                }
            }
            Ok(row.len() - 1)
        }
        ExpertSpec::Group1Bayes {
            mean0,
            mean1,
            var0,
            var1,
        } => {
            if example.x.len() != mean0.len() {
                return Err(Error::InvalidInput(format!(
                    "example dimension {} does not match discriminant dimension {}",
                    example.x.len(),
                    mean0.len()
                )));
            }
            let mut score = 0.0;
            for j in 0..mean0.len() {
                let pooled = 0.5 * (var0[j] + var1[j]);
                let w = (mean1[j] - mean0[j]) / pooled;
                score += w * (example.x[j] - 0.5 * (mean0[j] + mean1[j]));
            }
            Ok((score > 0.0) as usize)
        }
    }
}

/// Attaches simulated expert labels to every example; draws happen in index
/// order from one stream derived from `seed`, so the result is deterministic.
pub fn attach_expert_labels(data: &DeferralDataset, spec: &ExpertSpec, seed: u64) -> Result<DeferralDataset> {
    spec.validate(data.num_classes(), data.len(), data.dim())?;
    let mut rng = stream(seed, 0);
    let k = data.num_classes();
    data.with_expert_labels(|i, ex| expert_predict(spec, ex, i, k, &mut rng))
}

// ---------------------------------------------------------------------------
// Expert behavior models over annotation tuples
// ---------------------------------------------------------------------------

/// Annotation tuple: per-task ground truth bits paired with the expert's
/// per-task decisions.
pub type Annotation = (Vec<u8>, Vec<u8>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorMethod {
    /// Class-conditional noise: the expert's decision depends only on the
    /// task's own label.
    Ccn,
    /// Empirical conditional table over full label vectors, backing off to
    /// the CCN estimate for unseen vectors.
    TableLookup,
    /// Per-task logistic regression over the full label vector.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaskLogistic {
    weights: Vec<f64>,
    bias: f64,
}

/// A fitted per-task model of `P(e_j = 1 | label vector)`. The CCN estimates
/// are always fit — they are either the model itself or the table's backoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertBehaviorModel {
    method: BehaviorMethod,
    num_tasks: usize,
    /// Per task: `[P(e=1 | y=0), P(e=1 | y=1)]` with add-1 smoothing.
    ccn: Vec<[f64; 2]>,
    /// Raw empirical `P(e_j = 1 | y)` keyed by the label bitstring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logistic: Option<Vec<TaskLogistic>>,
}

fn bitstring(labels: &[u8]) -> String {
    labels.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

fn validate_annotations(annotations: &[Annotation]) -> Result<usize> {
    let Some(first) = annotations.first() else {
        return Err(Error::InvalidInput("annotations must be non-empty".into()));
    };
    let t = first.0.len();
    if t == 0 {
        return Err(Error::InvalidInput("annotations need at least one task".into()));
    }
    for (i, (y, e)) in annotations.iter().enumerate() {
        if y.len() != t || e.len() != t {
            return Err(Error::InvalidInput(format!(
                "annotation {i} has inconsistent task count"
            )));
        }
        if y.iter().chain(e.iter()).any(|&b| b > 1) {
            return Err(Error::InvalidInput(format!(
                "annotation {i} has non-bit entries"
            )));
        }
    }
    Ok(t)
}

fn fit_ccn(annotations: &[Annotation], t: usize) -> Vec<[f64; 2]> {
    let mut ccn = Vec::with_capacity(t);
    for j in 0..t {
        let mut params = [0.0; 2];
        for b in 0..2u8 {
            let n = annotations.iter().filter(|(y, _)| y[j] == b).count();
            let ones = annotations
                .iter()
                .filter(|(y, e)| y[j] == b && e[j] == 1)
                .count();
            params[b as usize] = (ones as f64 + 1.0) / (n as f64 + 2.0);
        }
        ccn.push(params);
    }
    ccn
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits a behavior model of the expert: CCN uses add-1 smoothed conditional
/// frequencies, the table stores raw per-label-vector frequencies over the
/// observed vectors, and the logistic variant trains per-task weights by SGD
/// on cross entropy (`seed` feeds only that training; the counting methods
/// are deterministic).
pub fn fit_expert_model(method: BehaviorMethod, annotations: &[Annotation], seed: u64) -> Result<ExpertBehaviorModel> {
    let t = validate_annotations(annotations)?;
    let ccn = fit_ccn(annotations, t);
    let mut model = ExpertBehaviorModel {
        method,
        num_tasks: t,
        ccn,
        table: None,
        logistic: None,
    };
    match method {
        BehaviorMethod::Ccn => {}
        BehaviorMethod::TableLookup => {
            let mut groups: BTreeMap<String, Vec<&Annotation>> = BTreeMap::new();
            for ann in annotations {
                groups.entry(bitstring(&ann.0)).or_default().push(ann);
            }
            let table = groups
                .into_iter()
                .map(|(key, rows)| {
                    let probs = (0..t)
                        .map(|j| {
                            let ones = rows.iter().filter(|(_, e)| e[j] == 1).count();
                            ones as f64 / rows.len() as f64
                        })
                        .collect();
                    (key, probs)
                })
                .collect();
            model.table = Some(table);
        }
        BehaviorMethod::Logistic => {
            let mut fits = Vec::with_capacity(t);
            for j in 0..t {
                let examples: Vec<Example> = annotations
                    .iter()
                    .map(|(y, e)| {
                        let x: Vec<f64> = y.iter().map(|&b| b as f64).collect();
                        Example::new(x, e[j] as usize)
                    })
                    .collect();
                let data = DeferralDataset::new(examples, 2)?;
                let cfg = TrainConfig {
                    learning_rate: 0.5,
                    epochs: 80,
                    seed: seed.wrapping_add(j as u64),
                    loss: LossSelector::CrossEntropy,
                    ..TrainConfig::default()
                };
                let out = train_sgd(&data, Architecture::Linear, &cfg)?;
                // Collapse the two-output linear model into logistic weights
                // for P(e = 1): the difference of the output rows.
                let (w1, b1) = out.model.linear_parameters()?;
                let weights: Vec<f64> = (0..t).map(|c| w1[t + c] - w1[c]).collect();
                fits.push(TaskLogistic {
                    weights,
                    bias: b1[1] - b1[0],
                });
            }
            model.logistic = Some(fits);
        }
    }
    Ok(model)
}

impl ExpertBehaviorModel {
    pub fn method(&self) -> BehaviorMethod {
        self.method
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    /// Smoothed CCN estimates, `[P(e=1 | y=0), P(e=1 | y=1)]` per task.
    pub fn ccn_parameters(&self) -> &[[f64; 2]] {
        &self.ccn
    }

    /// Per-task `P(e_j = 1 | labels)` under the fitted model.
    pub fn predict_proba(&self, labels: &[u8]) -> Result<Vec<f64>> {
        if labels.len() != self.num_tasks {
            return Err(Error::InvalidInput(format!(
                "label vector has {} tasks, model expects {}",
                labels.len(),
                self.num_tasks
            )));
        }
        if labels.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("label vector has non-bit entries".into()));
        }
        match self.method {
            BehaviorMethod::Ccn => Ok(labels
                .iter()
                .enumerate()
                .map(|(j, &b)| self.ccn[j][b as usize])
                .collect()),
            BehaviorMethod::TableLookup => {
                let table = self.table.as_ref().expect("table fitted for table_lookup");
                match table.get(&bitstring(labels)) {
                    Some(probs) => Ok(probs.clone()),
                    // Unseen label vector: CCN backoff.
                    None => Ok(labels
                        .iter()
                        .enumerate()
                        .map(|(j, &b)| self.ccn[j][b as usize])
                        .collect()),
                }
            }
            BehaviorMethod::Logistic => {
                let fits = self.logistic.as_ref().expect("weights fitted for logistic");
                Ok(fits
                    .iter()
                    .map(|f| {
                        let z: f64 = f
                            .weights
                            .iter()
                            .zip(labels)
                            .map(|(w, &b)| w * b as f64)
                            .sum::<f64>()
                            + f.bias;
                        sigmoid(z)
                    })
                    .collect())
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let model: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        if model.ccn.len() != model.num_tasks {
            return Err(Error::Schema("behavior model has inconsistent task count".into()));
        }
        let stored_ok = match model.method {
            BehaviorMethod::Ccn => true,
            BehaviorMethod::TableLookup => model.table.is_some(),
            BehaviorMethod::Logistic => model
                .logistic
                .as_ref()
                .is_some_and(|l| l.len() == model.num_tasks),
        };
        if !stored_ok {
            return Err(Error::Schema("behavior model is missing its fitted parameters".into()));
        }
        let probs_ok = model.ccn.iter().flatten().all(|p| (0.0..=1.0).contains(p))
            && model
                .table
                .iter()
                .flat_map(|t| t.values().flatten())
                .all(|p| (0.0..=1.0).contains(p));
        if !probs_ok {
            return Err(Error::Schema("behavior model has probabilities outside [0, 1]".into()));
        }
        Ok(model)
    }
}

/// Draws one expert decision vector: independent per-task Bernoulli trials at
/// the model's conditional probabilities.
pub fn expert_model_sample(model: &ExpertBehaviorModel, labels: &[u8], rng: &mut ChaCha8Rng) -> Result<Vec<u8>> {
    let probs = model.predict_proba(labels)?;
    Ok(probs
        .iter()
        .map(|&p| (rng.gen_range(0.0..1.0) < p) as u8)
        .collect())
}

/// Per-task evaluation of a behavior model on held-out annotations. `None`
/// marks an undefined metric (single-class targets or empty denominators),
/// never a zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvaluation {
    /// AU-ROC of the model probability at predicting the expert's decision.
    pub auroc: Option<f64>,
    pub delta_fpr: Option<f64>,
    pub delta_tpr: Option<f64>,
    pub delta_f1: Option<f64>,
}

/// Scores a behavior model against held-out annotations: ranking quality at
/// predicting the expert's decisions, plus absolute gaps between the sampled
/// and true expert's FPR/TPR/F1 against the ground-truth targets.
pub fn evaluate_expert_model(
    model: &ExpertBehaviorModel,
    heldout: &[Annotation],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TaskEvaluation>> {
    let t = validate_annotations(heldout)?;
    if t != model.num_tasks {
        return Err(Error::InvalidInput(format!(
            "held-out annotations have {t} tasks, model expects {}",
            model.num_tasks
        )));
    }
    let probs: Vec<Vec<f64>> = heldout
        .iter()
        .map(|(y, _)| model.predict_proba(y))
        .collect::<Result<_>>()?;
    let sampled: Vec<Vec<u8>> = heldout
        .iter()
        .map(|(y, _)| expert_model_sample(model, y, rng))
        .collect::<Result<_>>()?;

    let mut evals = Vec::with_capacity(t);
    for j in 0..t {
        let scores: Vec<f64> = probs.iter().map(|p| p[j]).collect();
        let expert_bits: Vec<bool> = heldout.iter().map(|(_, e)| e[j] == 1).collect();
        let task_auroc = match auroc(&scores, &expert_bits) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let targets: Vec<bool> = heldout.iter().map(|(y, _)| y[j] == 1).collect();
        let sampled_bits: Vec<bool> = sampled.iter().map(|e| e[j] == 1).collect();
        let true_rates = binary_rates(&expert_bits, &targets)?;
        let model_rates = binary_rates(&sampled_bits, &targets)?;
        let gap = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => Some((a - b).abs()),
            _ => None,
        };
        evals.push(TaskEvaluation {
            auroc: task_auroc,
            delta_fpr: gap(model_rates.fpr, true_rates.fpr),
            delta_tpr: gap(model_rates.tpr, true_rates.tpr),
            delta_f1: gap(model_rates.f1, true_rates.f1),
        });
    }
    Ok(evals)
}

// ---------------------------------------------------------------------------
// Expert-label imputation
// ---------------------------------------------------------------------------

/// Result of imputing expert labels onto an unlabeled split.
#[derive(Debug, Clone)]
pub struct Imputation {
    /// Labeled examples followed by the unlabeled ones with imputed labels.
    pub data: DeferralDataset,
    /// Set when the labeled split contains no disagreements, so the
    /// agreement classifier degenerates to always-agree.
    pub degenerate_always_agree: bool,
    /// The fitted agreement classifier (class 1 = expert agrees).
    pub agreement_model: DeferralModel,
}

/// Trains a binary agreement classifier `x -> I[y = m]` on the labeled split
/// and imputes expert labels on the unlabeled one: `m = y` on predicted
/// agreement, otherwise the lowest label different from `y`. Any concrete
/// disagreeing label is equivalent downstream because the deferral losses
/// depend on `m` only through `I[m = y]`. Examples that already carry an
/// expert label keep it.
pub fn impute_expert_agreement(
    labeled: &DeferralDataset,
    unlabeled: &DeferralDataset,
    architecture: Architecture,
    cfg: &TrainConfig,
) -> Result<Imputation> {
    labeled.require_expert_labels()?;
    if labeled.num_classes() != unlabeled.num_classes() || labeled.dim() != unlabeled.dim() {
        return Err(Error::InvalidInput(
            "labeled and unlabeled splits must share class count and dimension".into(),
        ));
    }
    let mut agreement = Vec::with_capacity(labeled.len());
    for ex in labeled.examples() {
        let agree = ex.m.map(|m| m == ex.y);
        // Masked rows may lack an expert label; carry a placeholder.
        agreement.push(Example::new(ex.x.clone(), agree.unwrap_or(true) as usize));
    }
    let active_bits: Vec<usize> = labeled
        .active_indices()
        .into_iter()
        .map(|i| agreement[i].y)
        .collect();
    let degenerate_always_agree = active_bits.iter().all(|&b| b == 1);
    let agreement_data = DeferralDataset::with_mask(agreement, labeled.mask().to_vec(), 2)?;
    let cfg = cfg.clone().with_loss(LossSelector::CrossEntropy);
    let agreement_model = train_sgd(&agreement_data, architecture, &cfg)?.model;

    let mut combined: Vec<Example> = labeled.examples().to_vec();
    let mut mask: Vec<bool> = labeled.mask().to_vec();
    for (i, ex) in unlabeled.examples().iter().enumerate() {
        let mut ex = ex.clone();
        if ex.m.is_none() {
            let out = agreement_model.forward_raw(&ex.x)?;
            let agree = out[1] >= out[0];
            ex.m = Some(if agree {
                ex.y
            } else {
                // Lowest label different from y.
                usize::from(ex.y == 0)
            });
        }
        combined.push(ex);
        mask.push(unlabeled.is_active(i));
    }
    let data = DeferralDataset::with_mask(combined, mask, labeled.num_classes())?;
    Ok(Imputation {
        data,
        degenerate_always_agree,
        agreement_model,
    })
}

// ---------------------------------------------------------------------------
// Annotation CSV ingestion
// ---------------------------------------------------------------------------

/// Loads annotation tuples from a CSV with header
/// `task_1,...,task_T,e_1,...,e_T`. Entries must be `0` or `1`; an expert
/// entry of `U` is accepted as 1 only when `u_to_one` is set.
pub fn load_annotations_csv(path: &Path, u_to_one: bool) -> Result<Vec<Annotation>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.is_empty() || cols.len() % 2 != 0 {
        return Err(Error::Schema(format!(
            "expected task_1..task_T,e_1..e_T columns, got {} columns",
            cols.len()
        )));
    }
    let t = cols.len() / 2;
    for j in 0..t {
        let want_task = format!("task_{}", j + 1);
        let want_e = format!("e_{}", j + 1);
        if cols[j] != want_task || cols[t + j] != want_e {
            return Err(Error::Schema(format!(
                "column {} is '{}', expected '{}'",
                if cols[j] != want_task { j } else { t + j },
                if cols[j] != want_task { cols[j] } else { cols[t + j] },
                if cols[j] != want_task { want_task } else { want_e }
            )));
        }
    }
    let parse_bit = |field: &str, line: usize, expert: bool| -> Result<u8> {
        match field.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            "U" if expert && u_to_one => Ok(1),
            other => Err(Error::Parse {
                line,
                msg: format!("expected 0 or 1, got '{other}'"),
            }),
        }
    };
    let mut annotations = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2; // header is line 1
        let record = record?;
        if record.len() != cols.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", cols.len(), record.len()),
            });
        }
        let y: Vec<u8> = (0..t)
            .map(|j| parse_bit(&record[j], line, false))
            .collect::<Result<_>>()?;
        let e: Vec<u8> = (0..t)
            .map(|j| parse_bit(&record[t + j], line, true))
            .collect::<Result<_>>()?;
        annotations.push((y, e));
    }
    if annotations.is_empty() {
        return Err(Error::Schema("annotation file has no data rows".into()));
    }
    Ok(annotations)
}

/// Writes annotation tuples in the same schema [`load_annotations_csv`] reads.
pub fn save_annotations_csv(path: &Path, annotations: &[Annotation]) -> Result<()> {
    let t = validate_annotations(annotations)?;
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    let mut header: Vec<String> = (1..=t).map(|j| format!("task_{j}")).collect();
    header.extend((1..=t).map(|j| format!("e_{j}")));
    writeln!(out, "{}", header.join(","))?;
    for (y, e) in annotations {
        let row: Vec<String> = y.iter().chain(e.iter()).map(|b| b.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
