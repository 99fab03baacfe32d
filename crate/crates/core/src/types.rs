//! Shared domain vocabulary: samples, labels, window entries, predictions,
//! and the learner configuration.
//!
//! Everything here is an immutable value type; copies are cheap to hand to
//! concurrent runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Violation of a domain-type invariant at construction time.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("feature vector must not be empty (t={t})")]
    EmptyFeatures { t: u64 },
    #[error("feature {index} is not finite (t={t})")]
    NonFiniteFeature { index: usize, t: u64 },
}

/// A feature vector together with its arrival index in the stream.
///
/// Construction rejects empty and non-finite feature vectors, so downstream
/// distance computations never see NaN or infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    features: Vec<f64>,
    t: u64,
}

impl Sample {
    pub fn new(features: Vec<f64>, t: u64) -> Result<Self, TypeError> {
        if features.is_empty() {
            return Err(TypeError::EmptyFeatures { t });
        }
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(TypeError::NonFiniteFeature { index, t });
        }
        Ok(Self { features, t })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// Arrival index of this sample in its stream.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Euclidean distance to another sample of the same dimension.
    pub fn distance(&self, other: &Sample) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.features
            .iter()
            .zip(&other.features)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A dense class id in `[0, C)` where `C` is declared by the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassLabel(pub u32);

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A sample paired with its true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample: Sample,
    pub label: ClassLabel,
}

/// How a stored label entered the k-NN memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOrigin {
    GroundTruth,
    SelfLabeled,
}

/// One stored sample in the sliding-window memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub sample: Sample,
    pub label: ClassLabel,
    pub origin: LabelOrigin,
    /// Global step counter value at insertion; strictly increasing within a window.
    pub inserted_at: u64,
}

/// A predicted class with the certainty of that prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: ClassLabel,
    /// Certainty in `[0, 1]` (clamped).
    pub certainty: f64,
}

/// Operating mode of the hybrid learner during deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerMode {
    /// Self-labeling only; the oracle is never queried.
    SlOnly,
    /// Self-labeling plus per-sample active learning inside AL windows.
    SlPlusAl,
    /// Self-labeling plus a full ground-truth batch inside AL windows.
    SlPlusBatch,
}

impl LearnerMode {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerMode::SlOnly => "sl_only",
            LearnerMode::SlPlusAl => "sl_plus_al",
            LearnerMode::SlPlusBatch => "sl_plus_batch",
        }
    }
}

/// A configuration field failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid config: {field}: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl ConfigError {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

/// All hyperparameters of the window, the decision rule, and the hybrid
/// learner's thresholds and timers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// Number of neighbors consulted by the decision rule.
    pub k: usize,
    /// Window capacity.
    pub tau: usize,
    /// Length of the certainty history driving the AL trigger.
    pub tau_stop: usize,
    /// Length of an active-learning window, in samples.
    pub tau_al: usize,
    /// The AL trigger threshold as a fraction of the self-labeling threshold.
    pub theta_al_factor: f64,
    /// Quantile of correct train-phase certainties that becomes the
    /// self-labeling threshold.
    pub sl_quantile: f64,
    /// Age weight assigned to the oldest entry of a full window; the newest
    /// entry always has weight 1, with linear interpolation in between.
    pub age_weight_oldest: f64,
    /// Vote weight of ground-truth-labeled entries.
    pub gt_weight: f64,
    /// Vote weight of self-labeled entries.
    pub sl_weight: f64,
    /// Deployment behavior.
    pub mode: LearnerMode,
    /// Enable the recency weighting in the decision rule.
    pub use_age_weight: bool,
    /// Enable the label-origin weighting in the decision rule.
    pub use_gt_weight: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            k: 5,
            tau: 100,
            tau_stop: 20,
            tau_al: 20,
            theta_al_factor: 0.9,
            sl_quantile: 0.25,
            age_weight_oldest: 0.9,
            gt_weight: 1.0,
            sl_weight: 0.5,
            mode: LearnerMode::SlPlusAl,
            use_age_weight: true,
            use_gt_weight: true,
        }
    }
}

impl LearnerConfig {
    /// Checks every field invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::new("k", "k must be ≥ 1"));
        }
        if self.tau == 0 {
            return Err(ConfigError::new("tau", "window capacity must be ≥ 1"));
        }
        if self.k > self.tau {
            return Err(ConfigError::new("k", "k exceeds window capacity"));
        }
        if self.tau_stop == 0 {
            return Err(ConfigError::new("tau_stop", "tau_stop must be ≥ 1"));
        }
        if self.tau_stop > self.tau {
            return Err(ConfigError::new("tau_stop", "tau_stop exceeds window capacity"));
        }
        if self.tau_al == 0 {
            return Err(ConfigError::new("tau_al", "tau_al must be ≥ 1"));
        }
        if !(self.theta_al_factor > 0.0 && self.theta_al_factor <= 1.0) {
            return Err(ConfigError::new(
                "theta_al_factor",
                "theta_al_factor must lie in (0, 1]",
            ));
        }
        if !(self.sl_quantile > 0.0 && self.sl_quantile < 1.0) {
            return Err(ConfigError::new("sl_quantile", "sl_quantile must lie in (0, 1)"));
        }
        if !(self.age_weight_oldest > 0.0 && self.age_weight_oldest <= 1.0) {
            return Err(ConfigError::new(
                "age_weight_oldest",
                "age_weight_oldest must lie in (0, 1]",
            ));
        }
        if !(self.gt_weight >= 1.0 && self.gt_weight.is_finite()) {
            return Err(ConfigError::new("gt_weight", "gt_weight must be ≥ 1"));
        }
        if !(self.sl_weight > 0.0 && self.sl_weight <= 1.0) {
            return Err(ConfigError::new("sl_weight", "sl_weight must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: LearnerMode) -> Self {
        self.mode = mode;
        self
    }
}
