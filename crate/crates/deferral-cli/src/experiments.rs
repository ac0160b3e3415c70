//! Experiment runners. Each kind dispatches its trials to the rayon pool
//! with an RNG stream derived from `(master seed, trial index)`, aggregates
//! single-threaded in trial order, and emits three artifacts into the output
//! directory:
//!
//! - `results.json` — aggregates; byte-identical across reruns except for
//!   the `generated_at_unix_secs` field,
//! - `curves.csv` — every per-trial raw value in the
//!   `method,task,coverage,metric,value,seed,trial` schema, from which each
//!   aggregate is recomputable,
//! - `run.log` — one status line per trial.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use deferral::bayes::{
    verify_consistency, ConsistencyOptions, DistPoint, DistributionSpec, SurrogateKind,
};
use deferral::core::{argmax_tiebreak, softmax_stable, DeferralDataset, Example};
use deferral::data::{
    gen_class_blobs, gen_gaussian_mixture, mask_features, save_dataset_csv, save_manifest,
    split_dataset, CsvSchema, DatasetManifest, GaussianMixtureConfig, SplitBy,
};
use deferral::evaluation::{
    coverage_sweep, deferral_scores, learned_oracle_rejector, system_metrics, write_curves_csv,
    CoverageCurve, CoverageMetric, CoveragePoint, OracleTarget, ScoreMethod, SystemPrediction,
};
use deferral::experts::{
    attach_expert_labels, evaluate_expert_model, fit_expert_model, Annotation, BehaviorMethod,
    ExpertSpec, TaskEvaluation,
};
use deferral::losses::LossSelector;
use deferral::optim::{
    predict_or_defer, select_alpha, temperature_scale, train_sgd, Architecture, DeferralModel,
    TrainConfig,
};
use deferral::rng::stream;

use crate::config::{DataConfig, ExperimentConfig, ExperimentKind};

/// Derives an independent child seed from `(seed, tag)`; the tag selects a
/// ChaCha stream, so children never overlap each other or the parent.
pub fn subseed(seed: u64, tag: u64) -> u64 {
    stream(seed, tag).gen()
}

/// Mean, sample standard deviation, and the normal-approximation 95%
/// confidence interval `mean ± 1.96·sd/√n`.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub sd: f64,
    pub ci95: [f64; 2],
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    assert!(!values.is_empty(), "aggregate of an empty sample");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / n.sqrt();
    Aggregate {
        mean,
        sd,
        ci95: [mean - half, mean + half],
        n: values.len(),
    }
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Everything an experiment run produced, echoed back to the caller so tests
/// can inspect results without re-reading the files.
#[derive(Debug)]
pub struct RunOutput {
    pub results: serde_json::Value,
    pub curves: Vec<CoverageCurve>,
    pub failures: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create output directory {}", cfg.out_dir.display()))?;

    let (aggregates, curves, log, failures) = match cfg.kind {
        ExperimentKind::GaussianTable1 => run_gaussian_table1(cfg)?,
        ExperimentKind::ConsistencySuite => run_consistency_suite(cfg)?,
        ExperimentKind::CoverageStudy => run_coverage_study(cfg)?,
        ExperimentKind::SampleComplexity => run_sample_complexity(cfg)?,
        ExperimentKind::NoiseStudy => run_noise_study(cfg)?,
        ExperimentKind::ExpertModelEval => run_expert_model_eval(cfg)?,
    };

    let generated_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after 1970")
        .as_secs();
    let results = json!({
        "experiment": cfg.kind.name(),
        "generated_at_unix_secs": generated_at,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "completed_trials": cfg.trials - failures,
        "aggregates": aggregates,
    });

    let results_path = cfg.out_dir.join("results.json");
    fs::write(&results_path, serde_json::to_string_pretty(&results)? + "\n")
        .with_context(|| format!("cannot write {}", results_path.display()))?;
    write_curves_csv(&cfg.out_dir.join("curves.csv"), &curves)?;
    let log_path = cfg.out_dir.join("run.log");
    fs::write(&log_path, log.join("\n") + "\n")
        .with_context(|| format!("cannot write {}", log_path.display()))?;

    if failures > 0 {
        bail!(
            "{failures} of {} trials failed; see {}",
            cfg.trials,
            log_path.display()
        );
    }
    Ok(RunOutput {
        results,
        curves,
        failures,
    })
}

type KindOutcome = (serde_json::Value, Vec<CoverageCurve>, Vec<String>, usize);

/// Runs `f` over all trial indices on the rayon pool and splits the outcomes
/// into successes (in trial order) and log lines.
fn run_trials<T: Send>(
    trials: usize,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> (Vec<(u64, T)>, Vec<String>, usize) {
    let outcomes: Vec<(u64, std::result::Result<T, String>)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| (t, f(t).map_err(|e| format!("{e:#}"))))
        .collect();
    let mut ok = Vec::with_capacity(trials);
    let mut log = Vec::with_capacity(trials);
    let mut failures = 0;
    for (t, outcome) in outcomes {
        match outcome {
            Ok(v) => {
                log.push(format!("trial {t}: ok"));
                ok.push((t, v));
            }
            Err(e) => {
                failures += 1;
                log.push(format!("trial {t}: ERROR {e}"));
            }
        }
    }
    (ok, log, failures)
}

fn train_config(cfg: &ExperimentConfig, loss: LossSelector, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed,
        loss,
        ..TrainConfig::default()
    }
}

fn expert_label(ex: &Example) -> usize {
    ex.m.expect("expert labels attached before evaluation")
}

fn single_point_curve(
    method: &str,
    task: &str,
    seed: u64,
    trial: u64,
    coverage: f64,
    metric: &str,
    value: f64,
) -> CoverageCurve {
    CoverageCurve {
        method: method.to_string(),
        task: task.to_string(),
        seed,
        trial,
        points: vec![CoveragePoint {
            coverage,
            metric: metric.to_string(),
            value,
        }],
    }
}

// ---------------------------------------------------------------------------
// gaussian_table1
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct MethodEval {
    accuracy: f64,
    coverage: f64,
}

fn system_eval(preds: Vec<SystemPrediction>) -> Result<MethodEval> {
    let metrics = system_metrics(&preds, false)?;
    Ok(MethodEval {
        accuracy: metrics.system_accuracy,
        coverage: metrics.coverage,
    })
}

/// One completed trial of the table comparison: per-method test evaluations
/// plus the grid α the validation step settled on (when `lce` ran).
struct Table1Trial {
    seed: u64,
    evals: BTreeMap<String, MethodEval>,
    lce_alpha: Option<f64>,
}

/// Two-group Gaussian-mixture comparison: the two-step `L_CE^α` recipe (α = 1
/// base model, per-α fine-tuning, validation choice of α and deferral
/// threshold) against the confidence, oracle, and (gradient-blocked)
/// mixture-of-experts baselines, sharing each trial's data but training
/// independently.
fn run_gaussian_table1(cfg: &ExperimentConfig) -> Result<KindOutcome> {
    let methods = cfg.resolved_methods();
    let (ok, log, failures) = run_trials(cfg.trials, |trial| table1_trial(cfg, &methods, trial));

    if ok.is_empty() {
        return Ok((serde_json::Value::Null, Vec::new(), log, failures));
    }
    let mut curves = Vec::new();
    for (trial, t) in &ok {
        for (method, eval) in &t.evals {
            curves.push(single_point_curve(
                method,
                "gaussian",
                t.seed,
                *trial,
                eval.coverage,
                "system_accuracy",
                eval.accuracy,
            ));
        }
        if let Some(alpha) = t.lce_alpha {
            curves.push(single_point_curve(
                "lce",
                "gaussian",
                t.seed,
                *trial,
                0.0,
                "selected_alpha",
                alpha,
            ));
        }
    }

    let mut per_method = serde_json::Map::new();
    for method in &methods {
        let accs: Vec<f64> = ok.iter().map(|(_, t)| t.evals[method].accuracy).collect();
        let covs: Vec<f64> = ok.iter().map(|(_, t)| t.evals[method].coverage).collect();
        per_method.insert(
            method.clone(),
            json!({
                "system_accuracy": aggregate(&accs),
                "coverage": aggregate(&covs),
            }),
        );
    }

    // Accuracy differences in percentage points, our method minus baseline,
    // and how often the validation step chose each grid α.
    let mut diffs = serde_json::Map::new();
    let mut alpha_counts = serde_json::Value::Null;
    if methods.iter().any(|m| m == "lce") {
        for baseline in methods.iter().filter(|m| *m != "lce") {
            let values: Vec<f64> = ok
                .iter()
                .map(|(_, t)| 100.0 * (t.evals["lce"].accuracy - t.evals[baseline].accuracy))
                .collect();
            diffs.insert(format!("lce_minus_{baseline}"), json!(aggregate(&values)));
        }
        let mut counts = serde_json::Map::new();
        for &alpha in &cfg.alpha_grid {
            let n = ok.iter().filter(|(_, t)| t.lce_alpha == Some(alpha)).count();
            counts.insert(format!("{alpha}"), json!(n));
        }
        alpha_counts = serde_json::Value::Object(counts);
    }
    let aggregates = json!({
        "methods": per_method,
        "alpha_selection_counts": alpha_counts,
        "accuracy_differences_pp": diffs,
    });
    Ok((aggregates, curves, log, failures))
}

fn table1_trial(cfg: &ExperimentConfig, methods: &[String], trial: u64) -> Result<Table1Trial> {
    let seed = subseed(cfg.seed, trial);
    let gm = GaussianMixtureConfig {
        dim: cfg.dim,
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        seed,
        ..GaussianMixtureConfig::default()
    };
    let (train, test, params) = gen_gaussian_mixture(&gm)?;
    let expert = params.group1_expert()?;
    let train = attach_expert_labels(&train, &expert, subseed(seed, 3))?;
    let test = attach_expert_labels(&test, &expert, subseed(seed, 4))?;
    let arch = cfg.parsed_architecture().map_err(anyhow::Error::from)?;

    let mut evals = BTreeMap::new();
    let mut lce_alpha = None;
    for (mi, method) in methods.iter().enumerate() {
        let train_seed = subseed(seed, 10 + mi as u64);
        let eval = match method.as_str() {
            "lce" => {
                let (eval, alpha) = eval_lce_method(cfg, arch, &train, &test, train_seed)?;
                lce_alpha = Some(alpha);
                eval
            }
            "confidence" => eval_confidence_method(cfg, arch, &train, &test, train_seed)?,
            "oracle" => eval_oracle_method(cfg, arch, &train, &test, train_seed)?,
            "mix_of_exp" => eval_mix_method(cfg, arch, &train, &test, train_seed)?,
            other => bail!("unknown method {other:?}"),
        };
        evals.insert(method.clone(), eval);
    }
    Ok(Table1Trial {
        seed,
        evals,
        lce_alpha,
    })
}

/// Deferral model from the two-step recipe: an α = 1 base model is trained on
/// the first training slice, each grid α fine-tunes a copy on the second
/// slice, and the (α, threshold) pair with the best validation system
/// accuracy decides the final model. Returns the test evaluation and the
/// chosen α.
fn eval_lce_method(
    cfg: &ExperimentConfig,
    arch: Architecture,
    train: &DeferralDataset,
    test: &DeferralDataset,
    seed: u64,
) -> Result<(MethodEval, f64)> {
    let parts = split_dataset(train, &[0.64, 0.16, 0.2], subseed(seed, 2), SplitBy::Row)?;
    let tc = train_config(cfg, LossSelector::LceAlpha { alpha: 1.0 }, subseed(seed, 3));
    let sel = select_alpha(&parts[0], &parts[1], &parts[2], &cfg.alpha_grid, arch, &tc)?;
    let preds = test
        .examples()
        .iter()
        .map(|ex| {
            let d = predict_or_defer(&sel.model, &ex.x, || Ok(expert_label(ex)), sel.threshold)?;
            Ok(SystemPrediction {
                prediction: d.prediction,
                deferred: d.deferred,
                label: ex.y,
                group: ex.group,
            })
        })
        .collect::<deferral::Result<Vec<_>>>()?;
    Ok((system_eval(preds)?, sel.alpha))
}

/// Confidence baseline: a plain classifier plus a second model of expert
/// agreement, deferring wherever the agreement model is the more confident
/// of the two.
fn eval_confidence_method(
    cfg: &ExperimentConfig,
    arch: Architecture,
    train: &DeferralDataset,
    test: &DeferralDataset,
    seed: u64,
) -> Result<MethodEval> {
    let classifier = train_sgd(
        train,
        arch,
        &train_config(cfg, LossSelector::CrossEntropy, seed),
    )?
    .model;
    let agreement = train_agreement_model(cfg, arch, train, subseed(seed, 1))?;

    let rows: Vec<Vec<f64>> = test
        .examples()
        .iter()
        .map(|ex| classifier.forward_raw(&ex.x))
        .collect::<deferral::Result<_>>()?;
    let agree_probs: Vec<f64> = test
        .examples()
        .iter()
        .map(|ex| agree_probability(&agreement, &ex.x, 1.0))
        .collect::<Result<_>>()?;
    let q = deferral_scores(ScoreMethod::Confidence, &rows, 1.0, Some(&agree_probs))?;

    let preds = test
        .examples()
        .iter()
        .zip(rows.iter().zip(&q))
        .map(|(ex, (row, &qi))| {
            let deferred = qi >= 0.0;
            Ok(SystemPrediction {
                prediction: if deferred { expert_label(ex) } else { argmax_tiebreak(row)? },
                deferred,
                label: ex.y,
                group: ex.group,
            })
        })
        .collect::<deferral::Result<Vec<_>>>()?;
    system_eval(preds)
}

/// Oracle baseline: the classifier trains only on the group the expert is
/// weak on, and a learned rejector separates the groups from their labels.
fn eval_oracle_method(
    cfg: &ExperimentConfig,
    arch: Architecture,
    train: &DeferralDataset,
    test: &DeferralDataset,
    seed: u64,
) -> Result<MethodEval> {
    let keep: Vec<usize> = train
        .examples()
        .iter()
        .enumerate()
        .filter(|(_, ex)| ex.group == Some(false))
        .map(|(i, _)| i)
        .collect();
    // A trial can draw group proportions so extreme that no group-0 rows
    // exist; the rejector then defers everywhere and the classifier's
    // training set hardly matters, so fall back to the full data.
    let classifier_data = if keep.is_empty() { train.clone() } else { train.subset(&keep)? };
    let classifier = train_sgd(
        &classifier_data,
        arch,
        &train_config(cfg, LossSelector::CrossEntropy, seed),
    )?
    .model;
    let rejector = learned_oracle_rejector(
        train,
        OracleTarget::GroupBit,
        arch,
        &train_config(cfg, LossSelector::CrossEntropy, subseed(seed, 1)),
    )?;

    let preds = test
        .examples()
        .iter()
        .map(|ex| {
            let gate = rejector.forward_raw(&ex.x)?;
            let deferred = argmax_tiebreak(&gate)? == 1;
            let prediction = if deferred {
                expert_label(ex)
            } else {
                argmax_tiebreak(&classifier.forward_raw(&ex.x)?)?
            };
            Ok(SystemPrediction {
                prediction,
                deferred,
                label: ex.y,
                group: ex.group,
            })
        })
        .collect::<deferral::Result<Vec<_>>>()?;
    system_eval(preds)
}

/// Mixture-of-experts baseline: softmax gate over (classify, defer) with the
/// classifier gradient blocked, deferring by gate argmax (ties defer).
fn eval_mix_method(
    cfg: &ExperimentConfig,
    arch: Architecture,
    train: &DeferralDataset,
    test: &DeferralDataset,
    seed: u64,
) -> Result<MethodEval> {
    let tc = train_config(
        cfg,
        LossSelector::Mix {
            block_classifier_gradient: true,
        },
        seed,
    );
    let model = train_sgd(train, arch, &tc)?.model;
    let k = train.num_classes();
    let preds = test
        .examples()
        .iter()
        .map(|ex| {
            let out = model.forward_raw(&ex.x)?;
            let deferred = out[k + 1] >= out[k];
            Ok(SystemPrediction {
                prediction: if deferred { expert_label(ex) } else { argmax_tiebreak(&out[..k])? },
                deferred,
                label: ex.y,
                group: ex.group,
            })
        })
        .collect::<deferral::Result<Vec<_>>>()?;
    system_eval(preds)
}

/// Trains the binary expert-agreement model (label 1 = expert matches the
/// target).
fn train_agreement_model(
    cfg: &ExperimentConfig,
    arch: Architecture,
    data: &DeferralDataset,
    seed: u64,
) -> Result<DeferralModel> {
    let relabeled: Vec<Example> = data
        .examples()
        .iter()
        .map(|ex| Example::new(ex.x.clone(), usize::from(ex.m == Some(ex.y))))
        .collect();
    let agreement_data = DeferralDataset::with_mask(relabeled, data.mask().to_vec(), 2)?;
    Ok(train_sgd(
        &agreement_data,
        arch,
        &train_config(cfg, LossSelector::CrossEntropy, seed),
    )?
    .model)
}

/// `P(expert correct | x)` from the agreement model at a given temperature.
fn agree_probability(model: &DeferralModel, x: &[f64], temperature: f64) -> Result<f64> {
    let out = model.forward_raw(x)?;
    let scaled: Vec<f64> = out.iter().map(|v| v / temperature).collect();
    Ok(softmax_stable(&scaled)?[1])
}

// ---------------------------------------------------------------------------
// consistency_suite
// ---------------------------------------------------------------------------

struct ConsistencyTrial {
    seed: u64,
    agreement_fraction: f64,
    excluded: usize,
    max_softmax_deviation: f64,
    all_converged: bool,
}

/// Random finite distribution: 2–4 classes, 20 points, masses and posteriors
/// normalized from uniform draws, expert correctness uniform on [0, 1].
pub fn random_distribution(seed: u64) -> Result<DistributionSpec> {
    let mut rng = stream(seed, 0);
    let k = rng.gen_range(2..=4usize);
    let n = 20;
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut points = Vec::with_capacity(n);
    let mut mass_used = 0.0;
    for id in 0..n {
        let mass = if id + 1 == n { 1.0 - mass_used } else { raw[id] / total };
        mass_used += mass;
        let eta_raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let eta_total: f64 = eta_raw.iter().sum();
        points.push(DistPoint {
            id,
            mass,
            eta: eta_raw.iter().map(|e| e / eta_total).collect(),
            pm: rng.gen_range(0.0..1.0),
        });
    }
    Ok(DistributionSpec::new(points)?)
}

/// Checks, on random distributions, that minimizing the α = 1 surrogate
/// recovers the Bayes classify-or-defer rule and the closed-form softmax.
fn run_consistency_suite(cfg: &ExperimentConfig) -> Result<KindOutcome> {
    let (ok, log, failures) = run_trials(cfg.trials, |trial| {
        let seed = subseed(cfg.seed, trial);
        let dist = random_distribution(seed)?;
        let report = verify_consistency(
            &dist,
            SurrogateKind::LceAlpha { alpha: 1.0 },
            &ConsistencyOptions::default(),
        )?;
        Ok(ConsistencyTrial {
            seed,
            agreement_fraction: report.agreement_fraction,
            excluded: report.excluded_near_ties,
            max_softmax_deviation: report.max_softmax_deviation.unwrap_or(0.0),
            all_converged: report.all_converged,
        })
    });
    if ok.is_empty() {
        return Ok((serde_json::Value::Null, Vec::new(), log, failures));
    }

    let mut curves = Vec::new();
    for (trial, t) in &ok {
        curves.push(single_point_curve(
            "lce1",
            "consistency",
            t.seed,
            *trial,
            0.0,
            "agreement_fraction",
            t.agreement_fraction,
        ));
        curves.push(single_point_curve(
            "lce1",
            "consistency",
            t.seed,
            *trial,
            0.0,
            "max_softmax_deviation",
            t.max_softmax_deviation,
        ));
        curves.push(single_point_curve(
            "lce1",
            "consistency",
            t.seed,
            *trial,
            0.0,
            "excluded_near_ties",
            t.excluded as f64,
        ));
        curves.push(single_point_curve(
            "lce1",
            "consistency",
            t.seed,
            *trial,
            0.0,
            "converged",
            f64::from(u8::from(t.all_converged)),
        ));
    }

    let fractions: Vec<f64> = ok.iter().map(|(_, t)| t.agreement_fraction).collect();
    let deviations: Vec<f64> = ok.iter().map(|(_, t)| t.max_softmax_deviation).collect();
    let aggregates = json!({
        "distributions": ok.len(),
        "perfect_agreement_fraction":
            fractions.iter().filter(|f| **f == 1.0).count() as f64 / ok.len() as f64,
        "min_agreement_fraction": fractions.iter().cloned().fold(f64::INFINITY, f64::min),
        "max_softmax_deviation": deviations.iter().cloned().fold(0.0f64, f64::max),
        "excluded_near_ties_total": ok.iter().map(|(_, t)| t.excluded).sum::<usize>(),
        "all_converged": ok.iter().all(|(_, t)| t.all_converged),
    });
    Ok((aggregates, curves, log, failures))
}

// ---------------------------------------------------------------------------
// coverage_study
// ---------------------------------------------------------------------------

/// Per-method inputs to a coverage sweep on the test set.
struct SweepInputs {
    q: Vec<f64>,
    classifier_preds: Vec<usize>,
}

/// Trains one scoring method and produces its deferral scores and classifier
/// predictions on `test`. The confidence methods are temperature-calibrated
/// on `cal`; `ours` scores raw margins.
fn sweep_inputs(
    cfg: &ExperimentConfig,
    arch: Architecture,
    method: &str,
    fit: &DeferralDataset,
    cal: &DeferralDataset,
    test: &DeferralDataset,
    seed: u64,
) -> Result<SweepInputs> {
    let forward_all = |model: &DeferralModel, data: &DeferralDataset| -> deferral::Result<Vec<Vec<f64>>> {
        data.examples().iter().map(|ex| model.forward_raw(&ex.x)).collect()
    };
    match method {
        "ours" => {
            let tc = train_config(cfg, LossSelector::LceAlpha { alpha: cfg.alpha }, seed);
            let model = train_sgd(fit, arch, &tc)?.model;
            let rows = forward_all(&model, test)?;
            let k = test.num_classes();
            let classifier_preds = rows
                .iter()
                .map(|r| argmax_tiebreak(&r[..k]))
                .collect::<deferral::Result<_>>()?;
            Ok(SweepInputs {
                q: deferral_scores(ScoreMethod::Ours, &rows, 1.0, None)?,
                classifier_preds,
            })
        }
        "model_confidence" => {
            let model = train_sgd(fit, arch, &train_config(cfg, LossSelector::CrossEntropy, seed))?.model;
            let cal_logits = forward_all(&model, cal)?;
            let cal_labels: Vec<usize> = cal.examples().iter().map(|ex| ex.y).collect();
            let temp = temperature_scale(&cal_logits, &cal_labels)?.temperature;
            let rows = forward_all(&model, test)?;
            let classifier_preds = rows
                .iter()
                .map(|r| argmax_tiebreak(r))
                .collect::<deferral::Result<_>>()?;
            Ok(SweepInputs {
                q: deferral_scores(ScoreMethod::ModelConfidence, &rows, temp, None)?,
                classifier_preds,
            })
        }
        "confidence" => {
            let model = train_sgd(fit, arch, &train_config(cfg, LossSelector::CrossEntropy, seed))?.model;
            let agreement = train_agreement_model(cfg, arch, fit, subseed(seed, 1))?;
            let cal_logits = forward_all(&model, cal)?;
            let cal_labels: Vec<usize> = cal.examples().iter().map(|ex| ex.y).collect();
            let temp = temperature_scale(&cal_logits, &cal_labels)?.temperature;
            let agree_cal: Vec<Vec<f64>> = forward_all(&agreement, cal)?;
            let agree_labels: Vec<usize> = cal
                .examples()
                .iter()
                .map(|ex| usize::from(ex.m == Some(ex.y)))
                .collect();
            let agree_temp = temperature_scale(&agree_cal, &agree_labels)?.temperature;
            let rows = forward_all(&model, test)?;
            let agree_probs: Vec<f64> = test
                .examples()
                .iter()
                .map(|ex| agree_probability(&agreement, &ex.x, agree_temp))
                .collect::<Result<_>>()?;
            let classifier_preds = rows
                .iter()
                .map(|r| argmax_tiebreak(r))
                .collect::<deferral::Result<_>>()?;
            Ok(SweepInputs {
                q: deferral_scores(ScoreMethod::Confidence, &rows, temp, Some(&agree_probs))?,
                classifier_preds,
            })
        }
        other => bail!("unknown method {other:?}"),
    }
}

/// Coverage sweeps on the two-group mixture: every method's deferral scores
/// are thresholded to exact coverage targets and scored at each level.
fn run_coverage_study(cfg: &ExperimentConfig) -> Result<KindOutcome> {
    let methods = cfg.resolved_methods();
    let grid = cfg.coverage_grid();
    let metrics = [CoverageMetric::SystemAccuracy, CoverageMetric::Auroc];

    let (ok, log, failures) = run_trials(cfg.trials, |trial| {
        let seed = subseed(cfg.seed, trial);
        let gm = GaussianMixtureConfig {
            dim: cfg.dim,
            n_train: cfg.n_train,
            n_test: cfg.n_test,
            seed,
            ..GaussianMixtureConfig::default()
        };
        let (train, test, params) = gen_gaussian_mixture(&gm)?;
        let expert = params.group1_expert()?;
        let train = attach_expert_labels(&train, &expert, subseed(seed, 3))?;
        let test = attach_expert_labels(&test, &expert, subseed(seed, 4))?;
        let parts = split_dataset(&train, &[0.8, 0.2], subseed(seed, 5), SplitBy::Row)?;
        let arch = cfg.parsed_architecture().map_err(anyhow::Error::from)?;

        let labels: Vec<usize> = test.examples().iter().map(|ex| ex.y).collect();
        let expert_preds: Vec<usize> = test.examples().iter().map(expert_label).collect();
        let mut trial_curves = Vec::new();
        for (mi, method) in methods.iter().enumerate() {
            let inputs = sweep_inputs(
                cfg,
                arch,
                method,
                &parts[0],
                &parts[1],
                &test,
                subseed(seed, 10 + mi as u64),
            )?;
            for metric in metrics {
                let points = coverage_sweep(
                    &inputs.q,
                    &inputs.classifier_preds,
                    &expert_preds,
                    &labels,
                    &grid,
                    metric,
                )?;
                trial_curves.push(CoverageCurve {
                    method: method.clone(),
                    task: "gaussian".to_string(),
                    seed,
                    trial,
                    points,
                });
            }
        }
        Ok(trial_curves)
    });
    if ok.is_empty() {
        return Ok((serde_json::Value::Null, Vec::new(), log, failures));
    }

    let curves: Vec<CoverageCurve> = ok.iter().flat_map(|(_, c)| c.clone()).collect();
    let aggregates = mean_curve_aggregates(&curves);
    Ok((aggregates, curves, log, failures))
}

/// Mean metric value per (method, task, metric, coverage) over trials —
/// exactly the reduction a reader of curves.csv would apply.
fn mean_curve_aggregates(curves: &[CoverageCurve]) -> serde_json::Value {
    let mut buckets: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();
    for curve in curves {
        for p in &curve.points {
            buckets
                .entry((
                    curve.method.clone(),
                    curve.task.clone(),
                    p.metric.clone(),
                    format!("{}", p.coverage),
                ))
                .or_default()
                .push(p.value);
        }
    }
    let mut out: BTreeMap<String, BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>> =
        BTreeMap::new();
    for ((method, task, metric, coverage), values) in buckets {
        out.entry(method)
            .or_default()
            .entry(task)
            .or_default()
            .entry(metric)
            .or_default()
            .insert(coverage, aggregate(&values).mean);
    }
    json!({ "mean_by_method_task_metric_coverage": out })
}

// ---------------------------------------------------------------------------
// sample_complexity
// ---------------------------------------------------------------------------

/// Trains on nested prefixes of the shuffled training set and sweeps
/// coverage on the fixed test set, mirroring a "restrict the training data"
/// study: larger fractions strictly contain smaller ones.
fn run_sample_complexity(cfg: &ExperimentConfig) -> Result<KindOutcome> {
    let fractions = cfg.fractions();
    let grid = cfg.coverage_grid();
    let k_expert = cfg.expert_k.unwrap_or(cfg.num_classes / 2);
    let metrics = [CoverageMetric::SystemAccuracy, CoverageMetric::Auroc];

    let (ok, log, failures) = run_trials(cfg.trials, |trial| {
        let seed = subseed(cfg.seed, trial);
        let all = gen_class_blobs(
            cfg.num_classes,
            cfg.dim,
            cfg.n_train + cfg.n_test,
            cfg.spread,
            seed,
        )?;
        let train = all.subset(&(0..cfg.n_train).collect::<Vec<_>>())?;
        let test = all.subset(&(cfg.n_train..cfg.n_train + cfg.n_test).collect::<Vec<_>>())?;
        let spec = ExpertSpec::KPerfect { k: k_expert };
        let train = attach_expert_labels(&train, &spec, subseed(seed, 3))?;
        let test = attach_expert_labels(&test, &spec, subseed(seed, 4))?;
        let arch = cfg.parsed_architecture().map_err(anyhow::Error::from)?;

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(subseed(seed, 5), 0));

        let labels: Vec<usize> = test.examples().iter().map(|ex| ex.y).collect();
        let expert_preds: Vec<usize> = test.examples().iter().map(expert_label).collect();
        let k = test.num_classes();
        let mut trial_curves = Vec::new();
        for (fi, &fraction) in fractions.iter().enumerate() {
            let take = ((fraction * cfg.n_train as f64).round() as usize).max(1);
            let subset = train.subset(&order[..take.min(order.len())])?;
            let tc = train_config(
                cfg,
                LossSelector::LceAlpha { alpha: cfg.alpha },
                subseed(seed, 10 + fi as u64),
            );
            let model = train_sgd(&subset, arch, &tc)?.model;
            let rows: Vec<Vec<f64>> = test
                .examples()
                .iter()
                .map(|ex| model.forward_raw(&ex.x))
                .collect::<deferral::Result<_>>()?;
            let q = deferral_scores(ScoreMethod::Ours, &rows, 1.0, None)?;
            let classifier_preds: Vec<usize> = rows
                .iter()
                .map(|r| argmax_tiebreak(&r[..k]))
                .collect::<deferral::Result<_>>()?;
            for metric in metrics {
                let points =
                    coverage_sweep(&q, &classifier_preds, &expert_preds, &labels, &grid, metric)?;
                trial_curves.push(CoverageCurve {
                    method: "ours".to_string(),
                    task: format!("frac_{fraction}"),
                    seed,
                    trial,
                    points,
                });
            }
        }
        Ok(trial_curves)
    });
    if ok.is_empty() {
        return Ok((serde_json::Value::Null, Vec::new(), log, failures));
    }

    let curves: Vec<CoverageCurve> = ok.iter().flat_map(|(_, c)| c.clone()).collect();
    let aggregates = max_over_grid_aggregates(&curves);
    Ok((aggregates, curves, log, failures))
}

/// Mean over trials of the best metric value across the coverage grid, per
/// (method, task, metric) — the "maximum achievable" summary of each curve.
fn max_over_grid_aggregates(curves: &[CoverageCurve]) -> serde_json::Value {
    let mut buckets: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for curve in curves {
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        for p in &curve.points {
            let entry = best.entry(&p.metric).or_insert(f64::NEG_INFINITY);
            *entry = entry.max(p.value);
        }
        for (metric, value) in best {
            buckets
                .entry((curve.method.clone(), curve.task.clone(), metric.to_string()))
                .or_default()
                .push(value);
        }
    }
    let mut out: BTreeMap<String, BTreeMap<String, BTreeMap<String, Aggregate>>> = BTreeMap::new();
    for ((method, task, metric), values) in buckets {
        out.entry(method)
            .or_default()
            .entry(task)
            .or_default()
            .insert(metric, aggregate(&values));
    }
    json!({ "max_over_coverage_grid": out })
}

// ---------------------------------------------------------------------------
// noise_study
// ---------------------------------------------------------------------------

/// Feature-masking sweep on the two-group mixture: each method is retrained
/// and swept at every corruption level.
fn run_noise_study(cfg: &ExperimentConfig) -> Result<KindOutcome> {
    let methods = cfg.resolved_methods();
    let grid = cfg.coverage_grid();
    let mask_fractions = cfg.mask_fractions();
    let mode = cfg.parsed_mask_mode()?;

    let (ok, log, failures) = run_trials(cfg.trials, |trial| {
        let seed = subseed(cfg.seed, trial);
        let gm = GaussianMixtureConfig {
            dim: cfg.dim,
            n_train: cfg.n_train,
            n_test: cfg.n_test,
            seed,
            ..GaussianMixtureConfig::default()
        };
        let (train, test, params) = gen_gaussian_mixture(&gm)?;
        let expert = params.group1_expert()?;
        let train = attach_expert_labels(&train, &expert, subseed(seed, 3))?;
        let test = attach_expert_labels(&test, &expert, subseed(seed, 4))?;
        let arch = cfg.parsed_architecture().map_err(anyhow::Error::from)?;

        let mut trial_curves = Vec::new();
        for (ni, &fraction) in mask_fractions.iter().enumerate() {
            let noise_seed = subseed(seed, 100 + ni as u64);
            let masked_train = mask_features(&train, mode, fraction, noise_seed)?;
            let masked_test = mask_features(&test, mode, fraction, subseed(noise_seed, 1))?;
            let parts = split_dataset(&masked_train, &[0.8, 0.2], subseed(seed, 5), SplitBy::Row)?;
            let labels: Vec<usize> = masked_test.examples().iter().map(|ex| ex.y).collect();
            let expert_preds: Vec<usize> =
                masked_test.examples().iter().map(expert_label).collect();
            for (mi, method) in methods.iter().enumerate() {
                let inputs = sweep_inputs(
                    cfg,
                    arch,
                    method,
                    &parts[0],
                    &parts[1],
                    &masked_test,
                    subseed(seed, 10 + (ni * methods.len() + mi) as u64),
                )?;
                let points = coverage_sweep(
                    &inputs.q,
                    &inputs.classifier_preds,
                    &expert_preds,
                    &labels,
                    &grid,
                    CoverageMetric::SystemAccuracy,
                )?;
                trial_curves.push(CoverageCurve {
                    method: method.clone(),
                    task: format!("mask_{fraction}"),
                    seed,
                    trial,
                    points,
                });
            }
        }
        Ok(trial_curves)
    });
    if ok.is_empty() {
        return Ok((serde_json::Value::Null, Vec::new(), log, failures));
    }

    let curves: Vec<CoverageCurve> = ok.iter().flat_map(|(_, c)| c.clone()).collect();
    let aggregates = max_over_grid_aggregates(&curves);
    Ok((aggregates, curves, log, failures))
}

// ---------------------------------------------------------------------------
// expert_model_eval
// ---------------------------------------------------------------------------

/// Per-trial synthetic annotation study: draw a per-task expert-correctness
/// profile, sample train/test annotation sets, fit every behavior model, and
/// score it on held-out annotations.
fn run_expert_model_eval(cfg: &ExperimentConfig) -> Result<KindOutcome> {
    let methods = cfg.resolved_methods();

    type TrialEvals = BTreeMap<String, Vec<TaskEvaluation>>;
    let (ok, log, failures) = run_trials(cfg.trials, |trial| -> Result<(u64, TrialEvals)> {
        let seed = subseed(cfg.seed, trial);
        let mut gen_rng = stream(seed, 0);
        let correct_probs: Vec<f64> =
            (0..cfg.tasks).map(|_| gen_rng.gen_range(0.55..0.95)).collect();
        let draw = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Annotation> {
            (0..n)
                .map(|_| {
                    let y: Vec<u8> = (0..cfg.tasks).map(|_| rng.gen_range(0..2u8)).collect();
                    let e: Vec<u8> = y
                        .iter()
                        .zip(&correct_probs)
                        .map(|(&yj, &p)| {
                            if rng.gen_range(0.0..1.0) < p {
                                yj
                            } else {
                                1 - yj
                            }
                        })
                        .collect();
                    (y, e)
                })
                .collect()
        };
        let train = draw(cfg.n_annot_train, &mut gen_rng);
        let heldout = draw(cfg.n_annot_test, &mut gen_rng);

        let mut per_method = BTreeMap::new();
        for (mi, method) in methods.iter().enumerate() {
            let behavior = match method.as_str() {
                "ccn" => BehaviorMethod::Ccn,
                "table_lookup" => BehaviorMethod::TableLookup,
                "logistic" => BehaviorMethod::Logistic,
                other => bail!("unknown method {other:?}"),
            };
            let model = fit_expert_model(behavior, &train, subseed(seed, 10 + mi as u64))?;
            let mut eval_rng = stream(subseed(seed, 20 + mi as u64), 0);
            let evals = evaluate_expert_model(&model, &heldout, &mut eval_rng)?;
            per_method.insert(method.clone(), evals);
        }
        Ok((seed, per_method))
    });
    if ok.is_empty() {
        return Ok((serde_json::Value::Null, Vec::new(), log, failures));
    }

    let mut curves = Vec::new();
    for (trial, (seed, per_method)) in &ok {
        for (method, evals) in per_method {
            for (task, eval) in evals.iter().enumerate() {
                let task_tag = format!("task_{}", task + 1);
                for (metric, value) in [
                    ("auroc", eval.auroc),
                    ("delta_fpr", eval.delta_fpr),
                    ("delta_tpr", eval.delta_tpr),
                    ("delta_f1", eval.delta_f1),
                ] {
                    if let Some(v) = value {
                        curves.push(single_point_curve(
                            method, &task_tag, *seed, *trial, 0.0, metric, v,
                        ));
                    }
                }
            }
        }
    }

    // Mean and interquartile summary per (method, task), with the paper-style
    // all-task average per method.
    let mut out = serde_json::Map::new();
    for method in &methods {
        let mut per_task = serde_json::Map::new();
        let mut all_task_aurocs = Vec::new();
        for task in 0..cfg.tasks {
            let collect = |f: &dyn Fn(&TaskEvaluation) -> Option<f64>| -> Vec<f64> {
                ok.iter()
                    .filter_map(|(_, (_, per))| f(&per[method][task]))
                    .collect()
            };
            let aurocs = collect(&|e| e.auroc);
            let mut task_entry = serde_json::Map::new();
            if !aurocs.is_empty() {
                task_entry.insert(
                    "auroc".into(),
                    json!({
                        "mean": aggregate(&aurocs).mean,
                        "q25": quantile(&aurocs, 0.25),
                        "q75": quantile(&aurocs, 0.75),
                        "n": aurocs.len(),
                    }),
                );
                all_task_aurocs.extend(aurocs);
            }
            for (name, getter) in [
                ("delta_fpr", &(|e: &TaskEvaluation| e.delta_fpr) as &dyn Fn(&TaskEvaluation) -> Option<f64>),
                ("delta_tpr", &|e: &TaskEvaluation| e.delta_tpr),
                ("delta_f1", &|e: &TaskEvaluation| e.delta_f1),
            ] {
                let values = collect(getter);
                if !values.is_empty() {
                    task_entry.insert(name.into(), json!(aggregate(&values).mean));
                }
            }
            per_task.insert(format!("task_{}", task + 1), serde_json::Value::Object(task_entry));
        }
        let mut method_entry = serde_json::Map::new();
        method_entry.insert("per_task".into(), serde_json::Value::Object(per_task));
        if !all_task_aurocs.is_empty() {
            method_entry.insert("mean_auroc_all_tasks".into(), json!(aggregate(&all_task_aurocs).mean));
        }
        out.insert(method.clone(), serde_json::Value::Object(method_entry));
    }
    Ok((serde_json::Value::Object(out), curves, log, failures))
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

/// Writes `train.csv`, `test.csv`, and `manifest.json` for the configured
/// generator.
pub fn generate_data(cfg: &DataConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create output directory {}", cfg.out_dir.display()))?;
    let (train, test, num_classes, has_group) = match cfg.generator.as_str() {
        "gaussian_mixture" => {
            let gm = GaussianMixtureConfig {
                dim: cfg.dim,
                n_train: cfg.n_train,
                n_test: cfg.n_test,
                seed: cfg.seed,
                ..GaussianMixtureConfig::default()
            };
            let (mut train, mut test, params) = gen_gaussian_mixture(&gm)?;
            if cfg.attach_expert {
                let expert = params.group1_expert()?;
                train = attach_expert_labels(&train, &expert, subseed(cfg.seed, 3))?;
                test = attach_expert_labels(&test, &expert, subseed(cfg.seed, 4))?;
            }
            (train, test, 2, true)
        }
        "class_blobs" => {
            let all = gen_class_blobs(
                cfg.num_classes,
                cfg.dim,
                cfg.n_train + cfg.n_test,
                cfg.spread,
                cfg.seed,
            )?;
            let mut train = all.subset(&(0..cfg.n_train).collect::<Vec<_>>())?;
            let mut test =
                all.subset(&(cfg.n_train..cfg.n_train + cfg.n_test).collect::<Vec<_>>())?;
            if cfg.attach_expert {
                let spec = ExpertSpec::KPerfect {
                    k: cfg.expert_k.unwrap_or(cfg.num_classes / 2),
                };
                train = attach_expert_labels(&train, &spec, subseed(cfg.seed, 3))?;
                test = attach_expert_labels(&test, &spec, subseed(cfg.seed, 4))?;
            }
            (train, test, cfg.num_classes, false)
        }
        other => bail!("unknown generator {other:?}"),
    };

    let mut schema = CsvSchema::new(
        (0..cfg.dim).map(|i| format!("x{i}")).collect(),
        "label",
    );
    if cfg.attach_expert {
        schema.expert_col = Some("expert".into());
    }
    if has_group {
        schema.group_col = Some("group".into());
    }
    save_dataset_csv(&cfg.out_dir.join("train.csv"), &train, &schema)?;
    save_dataset_csv(&cfg.out_dir.join("test.csv"), &test, &schema)?;
    save_manifest(
        &cfg.out_dir.join("manifest.json"),
        &DatasetManifest {
            n: train.len() + test.len(),
            d: cfg.dim,
            k: num_classes,
            seed: Some(cfg.seed),
            schema,
        },
    )?;
    Ok(cfg.out_dir.clone())
}
