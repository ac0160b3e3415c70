//! Score, example, and dataset types shared by every other module, plus the
//! two numeric primitives everything reduces to: a max-shifted softmax and a
//! lowest-index argmax.
//!
//! Convention used throughout the crate: a deferral system emits `K + 1`
//! scores where the first `K` entries are class scores and the **last** entry
//! is the deferral score. Ties always resolve deterministically — argmax
//! breaks toward the lowest index, and the rejector breaks toward deferring —
//! so every decision is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K` class scores followed by one deferral score at the last index.
///
/// The vector is validated on construction: at least two entries (`K >= 1`)
/// and every entry finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "score vector needs at least 2 entries (K >= 1 classes plus deferral), got {}",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "score vector contains non-finite entry {bad}"
            )));
        }
        Ok(Self { scores })
    }

    /// Number of classes `K` (total length minus the deferral slot).
    pub fn num_classes(&self) -> usize {
        self.scores.len() - 1
    }

    /// The `K` class scores.
    pub fn class_scores(&self) -> &[f64] {
        &self.scores[..self.scores.len() - 1]
    }

    /// The deferral score `g_bot` (last entry).
    pub fn deferral_score(&self) -> f64 {
        *self.scores.last().expect("validated non-empty")
    }

    /// All `K + 1` scores, deferral last.
    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    /// Deferral margin `q = g_bot - max_y g_y`; the rejector fires when
    /// `q >= threshold`, so equality defers.
    pub fn deferral_margin(&self) -> f64 {
        let max_class = self
            .class_scores()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        self.deferral_score() - max_class
    }
}

/// One observation: features, true label, and (when known) the expert's label
/// and a binary group membership bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    /// Feature vector of the dataset's dimension `d`.
    pub x: Vec<f64>,
    /// True label in `0..K`.
    pub y: usize,
    /// Expert's label in `0..K`, if observed.
    pub m: Option<usize>,
    /// Group bit (`true` = group 1), if observed.
    pub group: Option<bool>,
}

impl Example {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        Self {
            x,
            y,
            m: None,
            group: None,
        }
    }

    pub fn with_expert(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn with_group(mut self, group: bool) -> Self {
        self.group = Some(group);
        self
    }
}

/// A labeled dataset with homogeneous dimension and class count.
///
/// Each example carries an *active* bit; an inactive example is retained for
/// round-tripping but excluded from training and evaluation. This is how a
/// missing-label marker in an ingested file masks an example for a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferralDataset {
    examples: Vec<Example>,
    active: Vec<bool>,
    num_classes: usize,
    dim: usize,
}

impl DeferralDataset {
    /// Builds a dataset with every example active.
    pub fn new(examples: Vec<Example>, num_classes: usize) -> Result<Self> {
        let active = vec![true; examples.len()];
        Self::with_mask(examples, active, num_classes)
    }

    /// Builds a dataset with an explicit active mask (`true` = usable).
    pub fn with_mask(examples: Vec<Example>, active: Vec<bool>, num_classes: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidInput("dataset must be non-empty".into()));
        }
        if num_classes < 1 {
            return Err(Error::InvalidInput("dataset needs at least one class".into()));
        }
        if active.len() != examples.len() {
            return Err(Error::InvalidInput(format!(
                "mask length {} does not match example count {}",
                active.len(),
                examples.len()
            )));
        }
        let dim = examples[0].x.len();
        if dim == 0 {
            return Err(Error::InvalidInput("feature dimension must be positive".into()));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.x.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "example {i} has dimension {} but the dataset has dimension {dim}",
                    ex.x.len()
                )));
            }
            if let Some(bad) = ex.x.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "example {i} has non-finite feature {bad}"
                )));
            }
            // Only active examples need in-range labels; masked rows may carry
            // a placeholder written by an ingester.
            if active[i] {
                if ex.y >= num_classes {
                    return Err(Error::InvalidInput(format!(
                        "example {i} has label {} outside 0..{num_classes}",
                        ex.y
                    )));
                }
                if let Some(m) = ex.m {
                    if m >= num_classes {
                        return Err(Error::InvalidInput(format!(
                            "example {i} has expert label {m} outside 0..{num_classes}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            examples,
            active,
            num_classes,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty datasets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.active
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    /// Indices of usable examples, in dataset order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// New dataset containing the given example indices (mask bits kept).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut examples = Vec::with_capacity(indices.len());
        let mut active = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidInput(format!(
                    "subset index {i} out of range for dataset of length {}",
                    self.len()
                )));
            }
            examples.push(self.examples[i].clone());
            active.push(self.active[i]);
        }
        Self::with_mask(examples, active, self.num_classes)
    }

    /// Drops masked examples entirely.
    pub fn retain_active(&self) -> Result<Self> {
        self.subset(&self.active_indices())
    }

    /// Replaces every example's expert label via `f(index, example)`.
    pub fn with_expert_labels<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, &Example) -> Result<usize>,
    {
        let mut examples = self.examples.clone();
        for (i, ex) in examples.iter_mut().enumerate() {
            ex.m = Some(f(i, ex)?);
        }
        Self::with_mask(examples, self.active.clone(), self.num_classes)
    }

    /// Errors unless every active example carries an expert label.
    pub fn require_expert_labels(&self) -> Result<()> {
        for i in self.active_indices() {
            if self.examples[i].m.is_none() {
                return Err(Error::InvalidInput(format!(
                    "example {i} is missing an expert label"
                )));
            }
        }
        Ok(())
    }
}

fn check_finite(scores: &[f64]) -> Result<()> {
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite score {bad} in input"
        )));
    }
    Ok(())
}

/// Max-shifted softmax. Subtracting the maximum before exponentiating keeps
/// every exponent non-positive, so the transform cannot overflow for any
/// finite input and is shift-invariant by construction.
pub fn softmax_stable(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty slice".into()));
    }
    check_finite(scores)?;
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Natural-log softmax computed without leaving the log domain, so entries
/// stay finite even when the corresponding probability underflows to zero.
pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("log-softmax of an empty slice".into()));
    }
    check_finite(scores)?;
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = scores
        .iter()
        .map(|&s| (s - max).exp())
        .sum::<f64>()
        .ln();
    Ok(scores.iter().map(|&s| s - max - log_sum).collect())
}

/// Base-2 log softmax; the crate's log-based losses are measured in bits.
pub fn log2_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    let ln = log_softmax(scores)?;
    Ok(ln.into_iter().map(|v| v / std::f64::consts::LN_2).collect())
}

/// Index of the largest entry, breaking ties toward the lowest index.
pub fn argmax_tiebreak(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("argmax of an empty slice".into()));
    }
    check_finite(scores)?;
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}
