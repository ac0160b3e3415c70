//! Learning to defer: train classifiers that know when to hand an input to a
//! human expert.
//!
//! The combined system routes each input either to the classifier's argmax or
//! to the expert, and is scored on the final answer wherever it came from.
//! This crate provides:
//!
//! - consistent surrogate losses for joint classifier/rejector training
//!   ([`losses`]), all in bits (base-2 logs) so the main surrogate provably
//!   upper-bounds the system misclassification loss;
//! - population-level oracles and a numerical consistency harness that checks
//!   surrogate minimizers against the optimal defer rule ([`bayes`]);
//! - small dense models, seeded SGD, gradient checking, calibration, and
//!   threshold/α selection ([`optim`]);
//! - synthetic experts, learned expert-behavior models, and expert-label
//!   imputation ([`experts`]);
//! - system metrics, ranking metrics, and exact coverage sweeps
//!   ([`evaluation`]);
//! - reproducible data generators, CSV ingestion, and splits ([`data`]).
//!
//! Everything stochastic takes an explicit `u64` seed and derives independent
//! [`rng`] streams from it; identical seeds give bit-identical results.

pub mod bayes;
pub mod core;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experts;
pub mod losses;
pub mod optim;
pub mod rng;

pub use crate::core::{DeferralDataset, Example, ScoreVector};
pub use crate::error::{Error, Result};
pub use crate::losses::LossSelector;
pub use crate::optim::{Architecture, DeferralModel, TrainConfig};
