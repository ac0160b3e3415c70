//! Models and training: linear / one-hidden-layer score models, minibatch
//! SGD with momentum against any [`LossSelector`], finite-difference gradient
//! checking, temperature scaling, the two-step α selection procedure, and the
//! classify-or-defer prediction path with a lazily queried expert.
//!
//! Training is fully deterministic given the config seed: initialization and
//! epoch shuffling draw from separate, explicitly derived RNG streams, and no
//! parallelism is used inside a single training run.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::core::{argmax_tiebreak, log2_softmax, log_softmax, DeferralDataset, ScoreVector};
use crate::error::{Error, Result};
use crate::losses::{eval_lce_cost_sensitive, eval_lmix, eval_lsh_binary, CostVector, LossSelector};
use crate::rng::stream;

/// Model architecture: a linear map or one hidden ReLU layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    OneHidden { width: usize },
}

/// A dense score model with `output_dim` raw outputs. For deferral losses the
/// output width is `K + 1` (deferral score last); the mixture loss uses
/// `K + 2` (two gate scores last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferralModel {
    architecture: Architecture,
    input_dim: usize,
    output_dim: usize,
    /// First layer, row-major `(rows x input_dim)` where `rows` is the hidden
    /// width (or `output_dim` for a linear model).
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Second layer, row-major `(output_dim x width)`; empty for linear.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// On-disk checkpoint layout; bump `format_version` on any layout change.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: DeferralModel,
}

const CHECKPOINT_VERSION: u32 = 1;

impl DeferralModel {
    /// Fresh model with weights drawn from `U[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    pub fn init(architecture: Architecture, input_dim: usize, output_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidInput(
                "model dimensions must be positive".into(),
            ));
        }
        if let Architecture::OneHidden { width } = architecture {
            if width == 0 {
                return Err(Error::InvalidInput("hidden width must be positive".into()));
            }
        }
        let uniform = |rng: &mut ChaCha8Rng, n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let (w1, b1, w2, b2) = match architecture {
            Architecture::Linear => (
                uniform(rng, output_dim * input_dim, input_dim),
                vec![0.0; output_dim],
                Vec::new(),
                Vec::new(),
            ),
            Architecture::OneHidden { width } => (
                uniform(rng, width * input_dim, input_dim),
                vec![0.0; width],
                uniform(rng, output_dim * width, width),
                vec![0.0; output_dim],
            ),
        };
        Ok(Self {
            architecture,
            input_dim,
            output_dim,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Raw scores for one input.
    pub fn forward_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::InvalidInput(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        match self.architecture {
            Architecture::Linear => Ok(affine(&self.w1, &self.b1, x)),
            Architecture::OneHidden { .. } => {
                let mut hidden = affine(&self.w1, &self.b1, x);
                for h in &mut hidden {
                    if *h < 0.0 {
                        *h = 0.0;
                    }
                }
                Ok(affine(&self.w2, &self.b2, &hidden))
            }
        }
    }

    /// Scores interpreted under the deferral convention (`K + 1`, deferral
    /// last). Fails if the model's output width cannot carry that convention.
    pub fn forward(&self, x: &[f64]) -> Result<ScoreVector> {
        ScoreVector::new(self.forward_raw(x)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &ckpt)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        let m = ckpt.model;
        let rows = match m.architecture {
            Architecture::Linear => m.output_dim,
            Architecture::OneHidden { width } => width,
        };
        let w2_ok = match m.architecture {
            Architecture::Linear => m.w2.is_empty() && m.b2.is_empty(),
            Architecture::OneHidden { width } => {
                m.w2.len() == m.output_dim * width && m.b2.len() == m.output_dim
            }
        };
        if m.w1.len() != rows * m.input_dim || m.b1.len() != rows || !w2_ok {
            return Err(Error::Schema("checkpoint weight shapes are inconsistent".into()));
        }
        Ok(m)
    }

    /// First-layer weights (row-major) and biases of a linear model; one-hidden
    /// models don't expose parameters this way.
    pub fn linear_parameters(&self) -> Result<(&[f64], &[f64])> {
        match self.architecture {
            Architecture::Linear => Ok((&self.w1, &self.b1)),
            Architecture::OneHidden { .. } => Err(Error::InvalidInput(
                "parameters are exposed only for linear models".into(),
            )),
        }
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn param_shapes(&self) -> [usize; 4] {
        [self.w1.len(), self.b1.len(), self.w2.len(), self.b2.len()]
    }

    /// Accumulates parameter gradients for one example given the gradient of
    /// the loss with respect to the raw outputs.
    fn accumulate_grads(&self, x: &[f64], grad_out: &[f64], grads: &mut Grads) {
        match self.architecture {
            Architecture::Linear => {
                for (o, &g) in grad_out.iter().enumerate() {
                    let row = &mut grads.w1[o * self.input_dim..(o + 1) * self.input_dim];
                    for (r, &xi) in row.iter_mut().zip(x) {
                        *r += g * xi;
                    }
                    grads.b1[o] += g;
                }
            }
            Architecture::OneHidden { width } => {
                let mut pre = affine(&self.w1, &self.b1, x);
                let hidden: Vec<f64> = pre.iter().map(|&h| h.max(0.0)).collect();
                for (o, &g) in grad_out.iter().enumerate() {
                    let row = &mut grads.w2[o * width..(o + 1) * width];
                    for (r, &hj) in row.iter_mut().zip(&hidden) {
                        *r += g * hj;
                    }
                    grads.b2[o] += g;
                }
                // Backprop into the hidden layer through the ReLU mask.
                for (j, p) in pre.iter_mut().enumerate() {
                    let mut gh = 0.0;
                    for (o, &g) in grad_out.iter().enumerate() {
                        gh += g * self.w2[o * width + j];
                    }
                    *p = if *p > 0.0 { gh } else { 0.0 };
                }
                for (j, &gp) in pre.iter().enumerate() {
                    if gp != 0.0 {
                        let row = &mut grads.w1[j * self.input_dim..(j + 1) * self.input_dim];
                        for (r, &xi) in row.iter_mut().zip(x) {
                            *r += gp * xi;
                        }
                        grads.b1[j] += gp;
                    }
                }
            }
        }
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    let mut out = b.to_vec();
    for (o, out_o) in out.iter_mut().enumerate() {
        let row = &w[o * cols..(o + 1) * cols];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *out_o += acc;
    }
    out
}

#[derive(Clone)]
struct Grads {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Grads {
    fn zeros_like(model: &DeferralModel) -> Self {
        let [a, b, c, d] = model.param_shapes();
        Self {
            w1: vec![0.0; a],
            b1: vec![0.0; b],
            w2: vec![0.0; c],
            b2: vec![0.0; d],
        }
    }

    fn buffers_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Hyperparameters for [`train_sgd`]. A learning rate of zero is accepted
/// (the weights simply never move), which makes no-op training observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossSelector,
    pub weight_decay: f64,
    /// Per-epoch cosine decay of the learning rate.
    pub cosine_schedule: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            loss: LossSelector::LceAlpha { alpha: 1.0 },
            weight_decay: 0.0,
            cosine_schedule: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidInput(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !self.momentum.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidInput(format!(
                "weight decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn with_loss(mut self, loss: LossSelector) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A trained model plus the mean training loss per epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeferralModel,
    pub epoch_losses: Vec<f64>,
}

/// Initializes a model for `cfg.loss` and trains it on the active examples.
pub fn train_sgd(data: &DeferralDataset, architecture: Architecture, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let out_dim = cfg.loss.output_dim(data.num_classes());
    let mut init_rng = stream(cfg.seed, 0);
    let model = DeferralModel::init(architecture, data.dim(), out_dim, &mut init_rng)?;
    train_from(model, data, cfg)
}

/// Continues training an existing model (used for fine-tuning); weights are
/// taken as-is and only the shuffling stream is re-derived from the seed.
pub fn train_from(mut model: DeferralModel, data: &DeferralDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.loss.needs_expert() {
        data.require_expert_labels()?;
    }
    let expected_out = cfg.loss.output_dim(data.num_classes());
    if model.output_dim() != expected_out {
        return Err(Error::InvalidInput(format!(
            "model has {} outputs but the loss needs {expected_out}",
            model.output_dim()
        )));
    }
    if model.input_dim() != data.dim() {
        return Err(Error::InvalidInput(format!(
            "model expects dimension {}, dataset has {}",
            model.input_dim(),
            data.dim()
        )));
    }

    let mut indices = data.active_indices();
    if indices.is_empty() {
        return Err(Error::InvalidInput("no active examples to train on".into()));
    }
    let mut shuffle_rng = stream(cfg.seed, 1);
    let k = data.num_classes();
    let mut velocity = Grads::zeros_like(&model);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        shuffle(&mut indices, &mut shuffle_rng);
        let lr = if cfg.cosine_schedule {
            cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos())
        } else {
            cfg.learning_rate
        };
        let mut epoch_loss = 0.0;
        for batch in indices.chunks(cfg.batch_size) {
            let mut grads = Grads::zeros_like(&model);
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = data.example(i);
                let outputs = model.forward_raw(&ex.x)?;
                if outputs.iter().any(|v| !v.is_finite()) {
                    return Err(Error::TrainingDiverged {
                        step,
                        detail: format!("model outputs became non-finite on example {i}"),
                    });
                }
                let eval = cfg.loss.eval(&outputs, k, ex.y, ex.m)?;
                if !eval.value.is_finite() {
                    return Err(Error::TrainingDiverged {
                        step,
                        detail: format!("loss became {} on example {i}", eval.value),
                    });
                }
                batch_loss += eval.value;
                model.accumulate_grads(&ex.x, &eval.grad, &mut grads);
            }
            epoch_loss += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            let params = model.params_mut();
            let vels = velocity.buffers_mut();
            let mut raw = grads;
            let bufs = raw.buffers_mut();
            for ((param, vel), grad) in params.into_iter().zip(vels).zip(bufs) {
                for ((p, v), g) in param.iter_mut().zip(vel.iter_mut()).zip(grad.iter()) {
                    let g = g * scale + cfg.weight_decay * *p;
                    *v = cfg.momentum * *v - lr * g;
                    *p += *v;
                }
            }
            step += 1;
        }
        epoch_losses.push(epoch_loss / indices.len() as f64);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    // Fisher-Yates; kept local so the trainer's determinism depends only on
    // this crate and the seeded stream.
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}

/// Final system decision for one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDecision {
    /// The system's answer: the classifier's argmax, or the expert's label
    /// when deferred.
    pub prediction: usize,
    pub deferred: bool,
}

/// Runs the deferral rule `g_bot - max_y g_y >= threshold` (ties defer) and
/// queries the expert **only** when deferring — the closure is not called on
/// the classify path.
pub fn predict_or_defer<F>(
    model: &DeferralModel,
    x: &[f64],
    expert: F,
    threshold: f64,
) -> Result<SystemDecision>
where
    F: FnOnce() -> std::result::Result<usize, String>,
{
    if !threshold.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite threshold {threshold}")));
    }
    let scores = model.forward(x)?;
    if scores.deferral_margin() >= threshold {
        let label = expert().map_err(Error::ExpertUnavailable)?;
        if label >= scores.num_classes() {
            return Err(Error::InvalidInput(format!(
                "expert label {label} outside 0..{}",
                scores.num_classes()
            )));
        }
        Ok(SystemDecision {
            prediction: label,
            deferred: true,
        })
    } else {
        Ok(SystemDecision {
            prediction: argmax_tiebreak(scores.class_scores())?,
            deferred: false,
        })
    }
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Which loss a finite-difference probe should exercise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossUnderTest {
    LceAlpha { alpha: f64 },
    /// Random non-negative cost vectors.
    LceCostSensitive,
    Mix { block_classifier_gradient: bool },
    /// Binary exponential surrogate with random `c`, `cx`, `alpha`.
    LshBinary,
}

/// Result of a finite-difference sweep; `pass` means every probe's worst
/// coordinate stayed within `tolerance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Pinned pass threshold for gradient checks.
pub const GRAD_CHECK_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

fn central_diff(value: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    hi[i] += FD_STEP;
    lo[i] -= FD_STEP;
    (value(&hi) - value(&lo)) / (2.0 * FD_STEP)
}

/// Relative error with a unit floor: exact for gradients of magnitude >= 1,
/// absolute below that, so near-zero coordinates don't blow up the ratio.
fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / fd.abs().max(1.0)
}

fn probe_against(value: &dyn Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    analytic
        .iter()
        .enumerate()
        .map(|(i, &a)| rel_err(a, central_diff(value, x, i)))
        .fold(0.0, f64::max)
}

/// Checks an arbitrary `(value, gradient)` evaluator against central
/// differences on uniform random inputs in `[-3, 3]^dim`. This is also the
/// hook for negative controls: feed it a corrupted gradient and it must fail.
pub fn grad_check_fn<F>(dim: usize, probes: usize, seed: u64, eval: F) -> GradCheckReport
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut rng = stream(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (_, analytic) = eval(&x);
        let value = |z: &[f64]| eval(z).0;
        worst = worst.max(probe_against(&value, &x, &analytic));
    }
    GradCheckReport {
        probes,
        max_rel_err: worst,
        tolerance: GRAD_CHECK_TOL,
        pass: worst <= GRAD_CHECK_TOL,
    }
}

/// Sweeps `probes` random inputs (random class counts 2..=5, scores in
/// `[-3, 3]`, random labels) and compares every analytic gradient coordinate
/// against central differences.
///
/// For the blocked mixture loss the classifier gradient is checked against
/// the objective it actually descends (plain cross entropy) while the gate
/// gradient is checked against the full mixture value.
pub fn grad_check(loss: LossUnderTest, probes: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = stream(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let k = rng.gen_range(2..=5usize);
        let y = rng.gen_range(0..k);
        let m = rng.gen_range(0..k);
        match loss {
            LossUnderTest::LceAlpha { alpha } => {
                let x: Vec<f64> = (0..=k).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let sel = LossSelector::LceAlpha { alpha };
                let (_, analytic) = eval_selector(&sel, &x, k, y, m)?;
                let value = |z: &[f64]| eval_selector(&sel, z, k, y, m).unwrap().0;
                worst = worst.max(probe_against(&value, &x, &analytic));
            }
            LossUnderTest::LceCostSensitive => {
                let x: Vec<f64> = (0..=k).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let costs: Vec<f64> = (0..=k).map(|_| rng.gen_range(0.0..2.0)).collect();
                let costs = CostVector::new(costs)?;
                let eval = |z: &[f64]| {
                    let sv = ScoreVector::new(z.to_vec()).unwrap();
                    let e = eval_lce_cost_sensitive(&sv, &costs).unwrap();
                    (e.value, e.grad)
                };
                let (_, analytic) = eval(&x);
                let value = |z: &[f64]| eval(z).0;
                worst = worst.max(probe_against(&value, &x, &analytic));
            }
            LossUnderTest::Mix {
                block_classifier_gradient,
            } => {
                let x: Vec<f64> = (0..k + 2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let sel = LossSelector::Mix {
                    block_classifier_gradient,
                };
                let (_, analytic) = eval_selector(&sel, &x, k, y, m)?;
                if block_classifier_gradient {
                    // Classifier coordinates descend plain cross entropy.
                    let (class, gate) = x.split_at(k);
                    let ce = |z: &[f64]| -log2_softmax(z).unwrap()[y];
                    let class_err = probe_against(&ce, class, &analytic[..k]);
                    let gate_arr = [gate[0], gate[1]];
                    let gate_value = |z: &[f64]| {
                        eval_lmix(class, &[z[0], z[1]], y, m, true).unwrap().value
                    };
                    let gate_err = probe_against(&gate_value, &gate_arr, &analytic[k..]);
                    worst = worst.max(class_err.max(gate_err));
                } else {
                    let value = |z: &[f64]| eval_selector(&sel, z, k, y, m).unwrap().0;
                    worst = worst.max(probe_against(&value, &x, &analytic));
                }
            }
            LossUnderTest::LshBinary => {
                let x = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let ys = if rng.gen_range(0..2) == 0 { -1.0 } else { 1.0 };
                let ms = if rng.gen_range(0..2) == 0 { -1.0 } else { 1.0 };
                let c = rng.gen_range(0.0..1.0);
                let cx = rng.gen_range(0.05..0.95);
                let alpha = rng.gen_range(0.5..2.0);
                let eval = |z: &[f64]| {
                    let e = eval_lsh_binary(z[0], z[1], ys, ms, c, cx, alpha).unwrap();
                    (e.value, e.grad)
                };
                let (_, analytic) = eval(&x);
                let value = |z: &[f64]| eval(z).0;
                worst = worst.max(probe_against(&value, &x, &analytic));
            }
        }
    }
    Ok(GradCheckReport {
        probes,
        max_rel_err: worst,
        tolerance: GRAD_CHECK_TOL,
        pass: worst <= GRAD_CHECK_TOL,
    })
}

fn eval_selector(sel: &LossSelector, x: &[f64], k: usize, y: usize, m: usize) -> Result<(f64, Vec<f64>)> {
    let e = sel.eval(x, k, y, Some(m))?;
    Ok((e.value, e.grad))
}

// ---------------------------------------------------------------------------
// Temperature scaling
// ---------------------------------------------------------------------------

/// Fitted temperature and the validation NLL it achieved. `degenerate_labels`
/// flags a single-class label set — the fit still runs, but the temperature
/// is not meaningful for calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    pub nll: f64,
    pub degenerate_labels: bool,
}

const TEMP_MIN: f64 = 0.05;
const TEMP_MAX: f64 = 10.0;
const TEMP_GRID: usize = 100;
const GOLDEN_ITERS: usize = 30;

/// Fits a single softmax temperature by minimizing validation NLL: a
/// 100-point log-spaced grid over `[0.05, 10]` followed by 30 golden-section
/// refinements around the best grid point. Dividing logits by `T > 0` never
/// changes their argmax, so accuracy is untouched.
pub fn temperature_scale(logits: &[Vec<f64>], labels: &[usize]) -> Result<TemperatureFit> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty logits/labels, got {} and {}",
            logits.len(),
            labels.len()
        )));
    }
    let width = logits[0].len();
    if width < 2 {
        return Err(Error::InvalidInput("logits need at least two classes".into()));
    }
    for (i, (row, &y)) in logits.iter().zip(labels).enumerate() {
        if row.len() != width {
            return Err(Error::InvalidInput(format!(
                "logit row {i} has width {}, expected {width}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("logit row {i} has non-finite entries")));
        }
        if y >= width {
            return Err(Error::InvalidInput(format!(
                "label {y} at row {i} outside 0..{width}"
            )));
        }
    }
    let degenerate = labels.windows(2).all(|w| w[0] == w[1]);

    let nll = |t: f64| -> f64 {
        let mut total = 0.0;
        let mut scaled = vec![0.0; width];
        for (row, &y) in logits.iter().zip(labels) {
            for (s, &v) in scaled.iter_mut().zip(row) {
                *s = v / t;
            }
            let lp = log_softmax(&scaled).expect("finite scaled logits");
            total -= lp[y];
        }
        total / logits.len() as f64
    };

    // Coarse log-spaced grid.
    let (ln_min, ln_max) = (TEMP_MIN.ln(), TEMP_MAX.ln());
    let grid: Vec<f64> = (0..TEMP_GRID)
        .map(|i| (ln_min + (ln_max - ln_min) * i as f64 / (TEMP_GRID - 1) as f64).exp())
        .collect();
    let mut best = 0usize;
    let mut best_nll = f64::INFINITY;
    for (i, &t) in grid.iter().enumerate() {
        let v = nll(t);
        if v < best_nll {
            best_nll = v;
            best = i;
        }
    }

    // Golden-section refinement in log-temperature around the best cell.
    let mut a = grid[best.saturating_sub(1)].ln();
    let mut b = grid[(best + 1).min(TEMP_GRID - 1)].ln();
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = nll(x1.exp());
    let mut f2 = nll(x2.exp());
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = nll(x1.exp());
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = nll(x2.exp());
        }
    }
    let t = (0.5 * (a + b)).exp();
    Ok(TemperatureFit {
        temperature: t,
        nll: nll(t),
        degenerate_labels: degenerate,
    })
}

// ---------------------------------------------------------------------------
// Two-step alpha selection
// ---------------------------------------------------------------------------

/// Default α grid swept by [`select_alpha`].
pub const DEFAULT_ALPHA_GRID: [f64; 13] = [
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0, 5.0,
];

/// Outcome of the two-step α selection.
#[derive(Debug, Clone)]
pub struct AlphaSelection {
    pub alpha: f64,
    pub threshold: f64,
    /// System accuracy on the validation set at the chosen `(alpha, threshold)`.
    pub accuracy: f64,
    pub model: DeferralModel,
}

/// Two-step α selection: train once at α = 1 on `train_warm`, then for every
/// candidate α fine-tune a copy of that model on `train_tune` and sweep the
/// deferral threshold over all distinct validation margins (plus a sentinel
/// that never defers). Picks the pair with the best validation system
/// accuracy; ties go to the smaller α, then the smaller threshold.
pub fn select_alpha(
    train_warm: &DeferralDataset,
    train_tune: &DeferralDataset,
    validation: &DeferralDataset,
    grid: &[f64],
    architecture: Architecture,
    base: &TrainConfig,
) -> Result<AlphaSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("alpha grid must be non-empty".into()));
    }
    validation.require_expert_labels()?;
    let warm_cfg = base.clone().with_loss(LossSelector::LceAlpha { alpha: 1.0 });
    let warm = train_sgd(train_warm, architecture, &warm_cfg)?;

    let mut best: Option<AlphaSelection> = None;
    for (gi, &alpha) in grid.iter().enumerate() {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidInput(format!("invalid alpha {alpha} in grid")));
        }
        let tune_cfg = base
            .clone()
            .with_loss(LossSelector::LceAlpha { alpha })
            .with_seed(base.seed.wrapping_add(1 + gi as u64));
        let tuned = train_from(warm.model.clone(), train_tune, &tune_cfg)?;
        let (threshold, accuracy) = sweep_threshold(&tuned.model, validation)?;
        let candidate = AlphaSelection {
            alpha,
            threshold,
            accuracy,
            model: tuned.model,
        };
        let replace = match &best {
            None => true,
            Some(b) => {
                candidate.accuracy > b.accuracy
                    || (candidate.accuracy == b.accuracy
                        && (candidate.alpha < b.alpha
                            || (candidate.alpha == b.alpha && candidate.threshold < b.threshold)))
            }
        };
        if replace {
            best = Some(candidate);
        }
    }
    Ok(best.expect("grid validated non-empty"))
}

/// Exact threshold sweep: every distinct margin is a candidate `tau` (defer
/// iff `q >= tau`), plus one sentinel above the maximum so "never defer" is
/// reachable. Returns the best `(tau, system accuracy)`.
fn sweep_threshold(model: &DeferralModel, validation: &DeferralDataset) -> Result<(f64, f64)> {
    let idx = validation.active_indices();
    if idx.is_empty() {
        return Err(Error::InvalidInput("validation set has no active examples".into()));
    }
    #[derive(Clone)]
    struct Row {
        q: f64,
        classifier_correct: bool,
        expert_correct: bool,
    }
    let mut rows = Vec::with_capacity(idx.len());
    for i in idx {
        let ex = validation.example(i);
        let scores = model.forward(&ex.x)?;
        let h = argmax_tiebreak(scores.class_scores())?;
        let m = ex.m.expect("validated above");
        rows.push(Row {
            q: scores.deferral_margin(),
            classifier_correct: h == ex.y,
            expert_correct: m == ex.y,
        });
    }
    // Sort by margin descending; a threshold at each distinct value defers
    // exactly the prefix with q >= that value.
    rows.sort_by(|a, b| b.q.partial_cmp(&a.q).expect("finite margins"));
    let n = rows.len();
    let mut candidates: Vec<(f64, f64)> = Vec::new(); // (tau, accuracy)

    // Prefix sums of expert correctness and suffix sums of classifier
    // correctness over the sorted order.
    let mut expert_prefix = vec![0usize; n + 1];
    for (i, r) in rows.iter().enumerate() {
        expert_prefix[i + 1] = expert_prefix[i] + r.expert_correct as usize;
    }
    let mut classifier_suffix = vec![0usize; n + 1];
    for i in (0..n).rev() {
        classifier_suffix[i] = classifier_suffix[i + 1] + rows[i].classifier_correct as usize;
    }

    let sentinel = rows[0].q + 1.0; // defers nothing
    candidates.push((sentinel, classifier_suffix[0] as f64 / n as f64));
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && rows[j + 1].q == rows[i].q {
            j += 1;
        }
        // tau = rows[i].q defers indices 0..=j.
        let correct = expert_prefix[j + 1] + classifier_suffix[j + 1];
        candidates.push((rows[i].q, correct as f64 / n as f64));
        i = j + 1;
    }

    let best = candidates
        .into_iter()
        .reduce(|acc, c| {
            if c.1 > acc.1 || (c.1 == acc.1 && c.0 < acc.0) {
                c
            } else {
                acc
            }
        })
        .expect("at least the sentinel candidate");
    Ok(best)
}
