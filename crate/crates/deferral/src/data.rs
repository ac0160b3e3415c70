//! Synthetic data generators, feature corruption, CSV ingestion, and splits.
//!
//! Generators are pure functions of their seed: parameter draws and example
//! draws use separate derived streams so regenerating with the same seed
//! reproduces datasets bit-for-bit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::core::{DeferralDataset, Example};
use crate::error::{Error, Result};
use crate::experts::ExpertSpec;
use crate::rng::stream;

/// Configuration for the two-group, two-class Gaussian mixture benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureConfig {
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Component means are drawn coordinate-wise from this interval.
    pub mean_range: (f64, f64),
    /// Per-coordinate noise scales are drawn from this interval; the drawn
    /// value multiplies a standard-normal draw, so a component's variance is
    /// the square of its drawn scale.
    pub scale_range: (f64, f64),
}

impl Default for GaussianMixtureConfig {
    fn default() -> Self {
        Self {
            dim: 10,
            n_train: 1000,
            n_test: 1000,
            seed: 0,
            mean_range: (0.0, 10.0),
            scale_range: (0.0, 10.0),
        }
    }
}

impl GaussianMixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidInput(
                "dimension and sample counts must be positive".into(),
            ));
        }
        for (name, (lo, hi)) in [("mean_range", self.mean_range), ("scale_range", self.scale_range)] {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidInput(format!(
                    "{name} must be a finite non-empty interval, got ({lo}, {hi})"
                )));
            }
        }
        if self.scale_range.0 < 0.0 {
            return Err(Error::InvalidInput("noise scales cannot be negative".into()));
        }
        Ok(())
    }
}

/// One Gaussian component: a mean vector and the diagonal of its covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// The drawn mixture parameters for one trial, indexed `components[group][class]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub p_group1: f64,
    pub components: [[GaussianComponent; 2]; 2],
}

impl GaussianParams {
    /// The simulated expert for this trial: the linear-discriminant rule
    /// built from the true group-1 component parameters.
    pub fn group1_expert(&self) -> Result<ExpertSpec> {
        let g1 = &self.components[1];
        ExpertSpec::group1_bayes(
            g1[0].mean.clone(),
            g1[1].mean.clone(),
            g1[0].var.clone(),
            g1[1].var.clone(),
        )
    }
}

/// Draws the group proportion and the four component parameter sets.
pub fn draw_gaussian_params(cfg: &GaussianMixtureConfig, rng: &mut ChaCha8Rng) -> Result<GaussianParams> {
    cfg.validate()?;
    let p_group1 = rng.gen_range(0.0..1.0);
    let draw_component = |rng: &mut ChaCha8Rng| GaussianComponent {
        mean: (0..cfg.dim)
            .map(|_| rng.gen_range(cfg.mean_range.0..cfg.mean_range.1))
            .collect(),
        var: (0..cfg.dim)
            .map(|_| {
                let scale = rng.gen_range(cfg.scale_range.0..cfg.scale_range.1);
                scale * scale
            })
            .collect(),
    };
    // Fixed draw order: group 0 class 0, group 0 class 1, group 1 class 0,
    // group 1 class 1.
    let components = [
        [draw_component(rng), draw_component(rng)],
        [draw_component(rng), draw_component(rng)],
    ];
    Ok(GaussianParams {
        p_group1,
        components,
    })
}

/// Samples `n` examples from drawn parameters: group ~ Bernoulli(p_group1),
/// label ~ Bernoulli(0.5) within the group, features from the component's
/// diagonal Gaussian.
pub fn sample_gaussian_dataset(params: &GaussianParams, n: usize, rng: &mut ChaCha8Rng) -> Result<DeferralDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("cannot sample an empty dataset".into()));
    }
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let group = rng.gen_range(0.0..1.0) < params.p_group1;
        let y = rng.gen_range(0..2usize);
        let comp = &params.components[group as usize][y];
        let x: Vec<f64> = comp
            .mean
            .iter()
            .zip(&comp.var)
            .map(|(&mu, &var)| {
                let normal = Normal::new(mu, var.sqrt()).expect("finite parameters");
                normal.sample(rng)
            })
            .collect();
        examples.push(Example::new(x, y).with_group(group));
    }
    DeferralDataset::new(examples, 2)
}

/// Generates one trial of the mixture benchmark: parameters, then train and
/// test sets from independent streams of `cfg.seed`.
pub fn gen_gaussian_mixture(cfg: &GaussianMixtureConfig) -> Result<(DeferralDataset, DeferralDataset, GaussianParams)> {
    let params = draw_gaussian_params(cfg, &mut stream(cfg.seed, 0))?;
    let train = sample_gaussian_dataset(&params, cfg.n_train, &mut stream(cfg.seed, 1))?;
    let test = sample_gaussian_dataset(&params, cfg.n_test, &mut stream(cfg.seed, 2))?;
    Ok((train, test, params))
}

/// Multiclass blobs: class `c` is a unit-variance diagonal Gaussian centered
/// at a random point scaled by `spread`; larger spreads are easier.
pub fn gen_class_blobs(
    num_classes: usize,
    dim: usize,
    n: usize,
    spread: f64,
    seed: u64,
) -> Result<DeferralDataset> {
    if num_classes < 2 || dim == 0 || n == 0 {
        return Err(Error::InvalidInput(
            "need at least two classes, a positive dimension, and examples".into(),
        ));
    }
    if !spread.is_finite() || spread <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "spread must be positive, got {spread}"
        )));
    }
    let mut center_rng = stream(seed, 0);
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| center_rng.gen_range(-spread..spread)).collect())
        .collect();
    let mut rng = stream(seed, 1);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let examples: Vec<Example> = (0..n)
        .map(|_| {
            let y = rng.gen_range(0..num_classes);
            let x: Vec<f64> = centers[y].iter().map(|&c| c + normal.sample(&mut rng)).collect();
            Example::new(x, y)
        })
        .collect();
    DeferralDataset::new(examples, num_classes)
}

/// Which coordinates feature masking zeroes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// The first `floor(fraction · d)` coordinates of every example.
    FixedBlock,
    /// A per-example random contiguous block of that length.
    RandomBlock,
}

/// Zeroes a contiguous block of feature coordinates in every example;
/// labels, expert labels, groups, and the active mask are untouched.
pub fn mask_features(data: &DeferralDataset, mode: MaskMode, fraction: f64, seed: u64) -> Result<DeferralDataset> {
    if !fraction.is_finite() || !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "mask fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let d = data.dim();
    let block = (fraction * d as f64).floor() as usize;
    let mut rng = stream(seed, 0);
    let examples: Vec<Example> = data
        .examples()
        .iter()
        .map(|ex| {
            let start = match mode {
                MaskMode::FixedBlock => 0,
                MaskMode::RandomBlock => {
                    if block >= d {
                        0
                    } else {
                        rng.gen_range(0..=d - block)
                    }
                }
            };
            let mut ex = ex.clone();
            for v in &mut ex.x[start..start + block] {
                *v = 0.0;
            }
            ex
        })
        .collect();
    DeferralDataset::with_mask(examples, data.mask().to_vec(), data.num_classes())
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Column layout of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub feature_cols: Vec<String>,
    pub label_col: String,
    pub expert_col: Option<String>,
    pub group_col: Option<String>,
    /// Marker for missing values: in the label column it deactivates the row,
    /// in the expert/group columns it leaves the field unset.
    pub missing_marker: String,
    /// Accept `U` in the expert column as label 1.
    pub u_to_one: bool,
}

impl CsvSchema {
    pub fn new(feature_cols: Vec<String>, label_col: impl Into<String>) -> Self {
        Self {
            feature_cols,
            label_col: label_col.into(),
            expert_col: None,
            group_col: None,
            missing_marker: "NA".into(),
            u_to_one: false,
        }
    }
}

/// JSON sidecar describing a stored dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: Option<u64>,
    pub schema: CsvSchema,
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), manifest)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Loads a dataset from CSV. Rows whose label equals the missing marker are
/// kept but deactivated (label 0 as placeholder); missing expert/group fields
/// stay unset. Labels at or above `num_classes` are schema errors.
pub fn load_dataset_csv(path: &Path, schema: &CsvSchema, num_classes: usize) -> Result<DeferralDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let feature_idx: Vec<usize> = schema
        .feature_cols
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;
    if feature_idx.is_empty() {
        return Err(Error::Schema("schema lists no feature columns".into()));
    }
    let label_idx = col_index(&schema.label_col)?;
    let expert_idx = schema.expert_col.as_deref().map(col_index).transpose()?;
    let group_idx = schema.group_col.as_deref().map(col_index).transpose()?;

    let mut examples = Vec::new();
    let mut active = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2; // header occupies line 1
        let record = record?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).map(str::trim).ok_or(Error::Parse {
                line,
                msg: format!("row has {} fields, column {i} requested", record.len()),
            })
        };
        let x: Vec<f64> = feature_idx
            .iter()
            .map(|&i| {
                let raw = field(i)?;
                raw.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("feature value '{raw}' is not a number"),
                })
            })
            .collect::<Result<_>>()?;

        let label_raw = field(label_idx)?;
        let (y, is_active) = if label_raw == schema.missing_marker {
            (0, false)
        } else {
            let y = label_raw.parse::<usize>().map_err(|_| Error::Parse {
                line,
                msg: format!("label '{label_raw}' is not a class index"),
            })?;
            if y >= num_classes {
                return Err(Error::Schema(format!(
                    "label {y} on line {line} outside 0..{num_classes}"
                )));
            }
            (y, true)
        };

        let mut ex = Example::new(x, y);
        if let Some(i) = expert_idx {
            let raw = field(i)?;
            if raw != schema.missing_marker {
                let m = if raw == "U" && schema.u_to_one {
                    1
                } else {
                    raw.parse::<usize>().map_err(|_| Error::Parse {
                        line,
                        msg: format!("expert label '{raw}' is not a class index"),
                    })?
                };
                if m >= num_classes {
                    return Err(Error::Schema(format!(
                        "expert label {m} on line {line} outside 0..{num_classes}"
                    )));
                }
                ex = ex.with_expert(m);
            }
        }
        if let Some(i) = group_idx {
            let raw = field(i)?;
            if raw != schema.missing_marker {
                let bit = match raw {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("group bit '{other}' is not 0/1"),
                        })
                    }
                };
                ex = ex.with_group(bit);
            }
        }
        examples.push(ex);
        active.push(is_active);
    }
    DeferralDataset::with_mask(examples, active, num_classes)
}

/// Writes a dataset in the layout [`load_dataset_csv`] reads; deactivated
/// rows get the missing marker in the label column, unset expert/group
/// fields get it in theirs.
pub fn save_dataset_csv(path: &Path, data: &DeferralDataset, schema: &CsvSchema) -> Result<()> {
    if schema.feature_cols.len() != data.dim() {
        return Err(Error::Schema(format!(
            "schema has {} feature columns for dimension {}",
            schema.feature_cols.len(),
            data.dim()
        )));
    }
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    let mut header = schema.feature_cols.clone();
    header.push(schema.label_col.clone());
    if let Some(c) = &schema.expert_col {
        header.push(c.clone());
    }
    if let Some(c) = &schema.group_col {
        header.push(c.clone());
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, ex) in data.examples().iter().enumerate() {
        let mut row: Vec<String> = ex.x.iter().map(|v| v.to_string()).collect();
        row.push(if data.is_active(i) {
            ex.y.to_string()
        } else {
            schema.missing_marker.clone()
        });
        if schema.expert_col.is_some() {
            row.push(match ex.m {
                Some(m) => m.to_string(),
                None => schema.missing_marker.clone(),
            });
        }
        if schema.group_col.is_some() {
            row.push(match ex.group {
                Some(g) => (g as usize).to_string(),
                None => schema.missing_marker.clone(),
            });
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Whether a split shuffles rows independently or keeps key groups together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitBy<'a> {
    Row,
    /// Rows sharing a key (e.g. one patient's records) always land in the
    /// same part; `keys[i]` belongs to row `i`.
    Key(&'a [usize]),
}

/// Splits a dataset into parts with the given fractions (must sum to 1).
/// Parts are disjoint, exhaustive, and deterministic given the seed; sizes
/// follow cumulative rounding so they always total the input size.
pub fn split_dataset(
    data: &DeferralDataset,
    fractions: &[f64],
    seed: u64,
    by: SplitBy<'_>,
) -> Result<Vec<DeferralDataset>> {
    if fractions.is_empty() {
        return Err(Error::InvalidInput("need at least one split fraction".into()));
    }
    if fractions.iter().any(|&f| !f.is_finite() || f < 0.0) {
        return Err(Error::InvalidInput("fractions must be non-negative".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "fractions must sum to 1, got {total}"
        )));
    }
    let mut rng = stream(seed, 0);
    let shuffle = |items: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        for i in (1..items.len()).rev() {
            let j = rng.gen_range(0..=i);
            items.swap(i, j);
        }
    };

    let row_parts: Vec<Vec<usize>> = match by {
        SplitBy::Row => {
            let mut order: Vec<usize> = (0..data.len()).collect();
            shuffle(&mut order, &mut rng);
            cut_by_fractions(&order, fractions)
        }
        SplitBy::Key(keys) => {
            if keys.len() != data.len() {
                return Err(Error::InvalidInput(format!(
                    "{} keys for {} rows",
                    keys.len(),
                    data.len()
                )));
            }
            // Distinct keys in first-appearance order, then shuffled.
            let mut distinct: Vec<usize> = Vec::new();
            for &k in keys {
                if !distinct.contains(&k) {
                    distinct.push(k);
                }
            }
            let mut order: Vec<usize> = (0..distinct.len()).collect();
            shuffle(&mut order, &mut rng);
            let key_parts = cut_by_fractions(&order, fractions);
            key_parts
                .into_iter()
                .map(|part| {
                    let chosen: Vec<usize> = part.iter().map(|&i| distinct[i]).collect();
                    (0..data.len()).filter(|&r| chosen.contains(&keys[r])).collect()
                })
                .collect()
        }
    };

    row_parts
        .into_iter()
        .enumerate()
        .map(|(p, mut rows)| {
            rows.sort_unstable();
            if rows.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "fraction {} produced an empty part {p}",
                    fractions[p]
                )));
            }
            data.subset(&rows)
        })
        .collect()
}

/// Cuts an ordering into consecutive chunks sized by cumulative rounding.
fn cut_by_fractions(order: &[usize], fractions: &[f64]) -> Vec<Vec<usize>> {
    let n = order.len();
    let mut parts = Vec::with_capacity(fractions.len());
    let mut cum = 0.0;
    let mut start = 0usize;
    for (i, &f) in fractions.iter().enumerate() {
        cum += f;
        let end = if i + 1 == fractions.len() {
            n
        } else {
            (cum * n as f64).round() as usize
        };
        parts.push(order[start..end.min(n)].to_vec());
        start = end.min(n);
    }
    parts
}
