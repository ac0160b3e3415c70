//! Flat JSON configuration for `defer run` and `defer gen-data`. Unknown
//! keys are hard errors so a typo cannot silently fall back to a default.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use deferral::data::MaskMode;
use deferral::optim::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GaussianTable1,
    ConsistencySuite,
    CoverageStudy,
    SampleComplexity,
    NoiseStudy,
    ExpertModelEval,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::GaussianTable1 => "gaussian_table1",
            ExperimentKind::ConsistencySuite => "consistency_suite",
            ExperimentKind::CoverageStudy => "coverage_study",
            ExperimentKind::SampleComplexity => "sample_complexity",
            ExperimentKind::NoiseStudy => "noise_study",
            ExperimentKind::ExpertModelEval => "expert_model_eval",
        }
    }
}

/// One experiment run. Every field except `kind` has a default, so a minimal
/// config is `{"kind": "gaussian_table1"}`; field meanings are documented in
/// the README. `trials` counts seeded repetitions (for `consistency_suite`
/// it is the number of random distributions).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Method tags; empty means the kind's documented default set.
    #[serde(default)]
    pub methods: Vec<String>,
    /// Training α for the `ours` method in the sweep experiments.
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    /// Candidate α values for the `lce` method in `gaussian_table1`: each
    /// trial fine-tunes an α = 1 base model once per candidate and keeps the
    /// (α, threshold) pair with the best validation system accuracy.
    #[serde(default = "defaults::alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::n")]
    pub n_train: usize,
    #[serde(default = "defaults::n")]
    pub n_test: usize,
    /// Class count for the blob generator (the Gaussian-mixture experiments
    /// are binary by construction).
    #[serde(default = "defaults::num_classes")]
    pub num_classes: usize,
    /// Blob center range: centers are drawn from `U(-spread, spread)^dim`.
    #[serde(default = "defaults::spread")]
    pub spread: f64,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// `linear` or `one_hidden`.
    #[serde(default = "defaults::architecture")]
    pub architecture: String,
    #[serde(default = "defaults::hidden_width")]
    pub hidden_width: usize,
    /// Perfect-region size for the `k_perfect` expert (blob experiments).
    #[serde(default)]
    pub expert_k: Option<usize>,
    #[serde(default)]
    pub coverage_grid: Option<Vec<f64>>,
    /// Training-set fractions for `sample_complexity`.
    #[serde(default)]
    pub fractions: Option<Vec<f64>>,
    /// Masked feature fractions for `noise_study`.
    #[serde(default)]
    pub mask_fractions: Option<Vec<f64>>,
    /// `fixed_block` or `random_block`.
    #[serde(default = "defaults::mask_mode")]
    pub mask_mode: String,
    /// Task count for `expert_model_eval`.
    #[serde(default = "defaults::tasks")]
    pub tasks: usize,
    #[serde(default = "defaults::annot_train")]
    pub n_annot_train: usize,
    #[serde(default = "defaults::annot_test")]
    pub n_annot_test: usize,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
}

mod defaults {
    use std::path::PathBuf;

    pub fn trials() -> usize {
        200
    }
    pub fn alpha() -> f64 {
        1.0
    }
    pub fn alpha_grid() -> Vec<f64> {
        vec![0.0, 0.5, 1.0]
    }
    pub fn dim() -> usize {
        10
    }
    pub fn n() -> usize {
        1000
    }
    pub fn num_classes() -> usize {
        4
    }
    pub fn spread() -> f64 {
        3.0
    }
    pub fn learning_rate() -> f64 {
        0.05
    }
    pub fn epochs() -> usize {
        15
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn architecture() -> String {
        "linear".into()
    }
    pub fn hidden_width() -> usize {
        32
    }
    pub fn mask_mode() -> String {
        "fixed_block".into()
    }
    pub fn tasks() -> usize {
        5
    }
    pub fn annot_train() -> usize {
        400
    }
    pub fn annot_test() -> usize {
        100
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            bail!("alpha must be finite and non-negative, got {}", self.alpha);
        }
        if self.alpha_grid.is_empty()
            || self.alpha_grid.iter().any(|a| !a.is_finite() || *a < 0.0)
        {
            bail!("alpha_grid must be non-empty with finite non-negative entries");
        }
        if self
            .alpha_grid
            .iter()
            .enumerate()
            .any(|(i, a)| self.alpha_grid[..i].contains(a))
        {
            bail!("alpha_grid entries must be distinct");
        }
        if self.dim == 0 || self.n_train == 0 || self.n_test == 0 {
            bail!("dim, n_train, and n_test must be positive");
        }
        if self.num_classes < 2 {
            bail!("num_classes must be at least 2");
        }
        self.parsed_architecture()?;
        self.parsed_mask_mode()?;
        for m in self.resolved_methods() {
            if !self.kind_methods().contains(&m.as_str()) {
                bail!(
                    "unknown method {m:?} for {}; expected one of {:?}",
                    self.kind.name(),
                    self.kind_methods()
                );
            }
        }
        if let Some(grid) = &self.coverage_grid {
            if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
                bail!("coverage_grid must be non-empty and strictly increasing");
            }
            if grid.iter().any(|c| !(0.0..=1.0).contains(c)) {
                bail!("coverage_grid entries must lie in [0, 1]");
            }
        }
        if let Some(list) = &self.fractions {
            if list.is_empty() || list.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                bail!("fractions must be non-empty with entries in (0, 1]");
            }
        }
        if let Some(list) = &self.mask_fractions {
            if list.is_empty() || list.iter().any(|f| !(0.0..=1.0).contains(f)) {
                bail!("mask_fractions must be non-empty with entries in [0, 1]");
            }
        }
        if self.tasks == 0 || self.n_annot_train == 0 || self.n_annot_test == 0 {
            bail!("tasks, n_annot_train, and n_annot_test must be positive");
        }
        Ok(())
    }

    /// Methods to run: the configured list, or the kind's default set.
    pub fn resolved_methods(&self) -> Vec<String> {
        if !self.methods.is_empty() {
            return self.methods.clone();
        }
        self.kind_methods().iter().map(|s| s.to_string()).collect()
    }

    fn kind_methods(&self) -> &'static [&'static str] {
        match self.kind {
            ExperimentKind::GaussianTable1 => &["lce", "confidence", "oracle", "mix_of_exp"],
            ExperimentKind::ConsistencySuite => &["lce1"],
            ExperimentKind::CoverageStudy | ExperimentKind::NoiseStudy => {
                &["ours", "model_confidence", "confidence"]
            }
            ExperimentKind::SampleComplexity => &["ours"],
            ExperimentKind::ExpertModelEval => &["ccn", "table_lookup", "logistic"],
        }
    }

    pub fn parsed_architecture(&self) -> Result<Architecture> {
        match self.architecture.as_str() {
            "linear" => Ok(Architecture::Linear),
            "one_hidden" => Ok(Architecture::OneHidden {
                width: self.hidden_width,
            }),
            other => bail!("unknown architecture {other:?}; expected \"linear\" or \"one_hidden\""),
        }
    }

    pub fn parsed_mask_mode(&self) -> Result<MaskMode> {
        match self.mask_mode.as_str() {
            "fixed_block" => Ok(MaskMode::FixedBlock),
            "random_block" => Ok(MaskMode::RandomBlock),
            other => bail!("unknown mask_mode {other:?}; expected \"fixed_block\" or \"random_block\""),
        }
    }

    pub fn coverage_grid(&self) -> Vec<f64> {
        self.coverage_grid
            .clone()
            .unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect())
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.fractions
            .clone()
            .unwrap_or_else(|| vec![0.05, 0.1, 0.25, 0.5, 0.75, 1.0])
    }

    pub fn mask_fractions(&self) -> Vec<f64> {
        self.mask_fractions
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.2, 0.4, 0.6, 0.8])
    }
}

/// Configuration for `defer gen-data`: writes train/test CSVs plus a
/// manifest into `out_dir`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `gaussian_mixture` or `class_blobs`.
    pub generator: String,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::n")]
    pub n_train: usize,
    #[serde(default = "defaults::n")]
    pub n_test: usize,
    #[serde(default = "defaults::num_classes")]
    pub num_classes: usize,
    #[serde(default = "defaults::spread")]
    pub spread: f64,
    #[serde(default)]
    pub seed: u64,
    /// Attach expert labels: the group-1 discriminant expert for the mixture,
    /// `k_perfect` (via `expert_k`) for blobs.
    #[serde(default)]
    pub attach_expert: bool,
    #[serde(default)]
    pub expert_k: Option<usize>,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
}

impl DataConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        if !matches!(cfg.generator.as_str(), "gaussian_mixture" | "class_blobs") {
            bail!(
                "unknown generator {:?}; expected \"gaussian_mixture\" or \"class_blobs\"",
                cfg.generator
            );
        }
        if cfg.dim == 0 || cfg.n_train == 0 || cfg.n_test == 0 || cfg.num_classes < 2 {
            bail!("dim, n_train, n_test must be positive and num_classes at least 2");
        }
        Ok(cfg)
    }
}
