//! The hybrid self-labeling / on-demand active-learning state machine.
//!
//! Training: every sample arrives labeled; the learner predicts first, then
//! stores the ground truth, and keeps the certainties of its correct
//! predictions. Calibration freezes the self-labeling threshold as a lower
//! quantile of those certainties. Deployment: confident predictions are
//! self-labeled into the window; when the mean certainty of the recent past
//! drops below the trigger threshold, an active-learning window of `tau_al`
//! samples opens during which ground truth may be requested.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    ClassLabel, ConfigError, LabelOrigin, LearnerConfig, LearnerMode, Prediction, Sample,
};
use crate::window::{SlidingWindow, WindowError};

/// The label oracle failed to produce a label for step `t`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("label oracle failed at t={t}: {message}")]
pub struct OracleError {
    pub t: u64,
    pub message: String,
}

/// Queryable environment that reveals the true label of the sample that
/// arrived at step `t`.
pub trait LabelOracle {
    fn query(&mut self, t: u64) -> Result<ClassLabel, OracleError>;
}

/// Adapter turning a closure into a [`LabelOracle`].
pub struct FnOracle<F>(pub F);

impl<F> LabelOracle for FnOracle<F>
where
    F: FnMut(u64) -> Result<ClassLabel, OracleError>,
{
    fn query(&mut self, t: u64) -> Result<ClassLabel, OracleError> {
        (self.0)(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Deployed,
}

/// What a step did to the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    GroundTruth,
    SelfLabel,
    None,
}

/// Per-step audit record: the pre-update prediction, what the step did, and
/// whether the oracle was asked.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// `None` only for the empty-window bootstrap during training (abstain).
    pub prediction: Option<Prediction>,
    pub updated_with: UpdateKind,
    pub label_requested: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("step is only valid in the {expected:?} phase")]
    WrongPhase { expected: Phase },
    #[error("no correct predictions were collected during training; extend the training stream so the threshold can be calibrated")]
    EmptyCalibration,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Certainties of correct train-phase predictions, kept for calibration.
#[derive(Debug, Clone, Default)]
pub struct CertaintyCalibration {
    values: Vec<f64>,
}

impl CertaintyCalibration {
    pub fn push(&mut self, certainty: f64) {
        self.values.push(certainty);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quantile with linear interpolation between order statistics.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        quantile_linear(&self.values, q)
    }
}

/// Quantile of `values` at level `q` using linear interpolation between
/// order statistics: the quantile sits at position `(n - 1) * q` of the
/// sorted data.
pub fn quantile_linear(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Common driving surface shared by the hybrid learner and the baselines.
pub trait OnlineLearner {
    fn train_step(&mut self, x: &Sample, y: ClassLabel) -> Result<StepOutcome, LearnerError>;
    fn finalize_training(&mut self) -> Result<(), LearnerError>;
    fn test_step(
        &mut self,
        x: &Sample,
        oracle: &mut dyn LabelOracle,
    ) -> Result<StepOutcome, LearnerError>;
    /// Deployment-phase oracle queries so far.
    fn labels_requested(&self) -> u64;
    fn config(&self) -> &LearnerConfig;
    /// Remaining active-learning credit, for audit records.
    fn al_credit(&self) -> usize {
        0
    }
    fn theta_sl(&self) -> Option<f64> {
        None
    }
}

/// The hybrid learner: sliding-window k-NN with self-labeling and demand
/// driven active learning.
#[derive(Debug, Clone)]
pub struct HybridLearner {
    window: SlidingWindow,
    config: LearnerConfig,
    calibration: CertaintyCalibration,
    theta_sl: Option<f64>,
    theta_al: Option<f64>,
    recent_certainties: VecDeque<f64>,
    al_credit: usize,
    labels_requested: u64,
    phase: Phase,
}

impl HybridLearner {
    pub fn new(config: LearnerConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            window: SlidingWindow::new(config.tau),
            config,
            calibration: CertaintyCalibration::default(),
            theta_sl: None,
            theta_al: None,
            recent_certainties: VecDeque::new(),
            al_credit: 0,
            labels_requested: 0,
            phase: Phase::Training,
        })
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn theta_al(&self) -> Option<f64> {
        self.theta_al
    }

    pub fn calibration(&self) -> &CertaintyCalibration {
        &self.calibration
    }

    /// Predicts without touching any state; errors on an empty window.
    pub fn predict(&self, x: &Sample) -> Result<Prediction, WindowError> {
        self.window.predict(x, &self.config)
    }

    /// One training step: predict, store the ground truth, and record the
    /// certainty if the prediction was correct. The very first sample has
    /// nothing to predict with and abstains.
    pub fn train_step(&mut self, x: &Sample, y: ClassLabel) -> Result<StepOutcome, LearnerError> {
        if self.phase != Phase::Training {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Training,
            });
        }
        let prediction = if self.window.is_empty() {
            None
        } else {
            Some(self.window.predict(x, &self.config)?)
        };
        self.window.push(x.clone(), y, LabelOrigin::GroundTruth)?;
        if let Some(p) = prediction {
            if p.label == y {
                self.calibration.push(p.certainty);
            }
        }
        Ok(StepOutcome {
            prediction,
            updated_with: UpdateKind::GroundTruth,
            label_requested: false,
        })
    }

    /// Freezes the self-labeling threshold at the configured quantile of the
    /// collected certainties and switches to deployment.
    pub fn finalize_training(&mut self) -> Result<(), LearnerError> {
        if self.phase != Phase::Training {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Training,
            });
        }
        let theta_sl = self
            .calibration
            .quantile(self.config.sl_quantile)
            .ok_or(LearnerError::EmptyCalibration)?;
        self.theta_sl = Some(theta_sl);
        self.theta_al = Some(self.config.theta_al_factor * theta_sl);
        self.phase = Phase::Deployed;
        Ok(())
    }

    /// One deployment step. Self-labels confident predictions; inside an
    /// active-learning window, behavior depends on the mode. The credit
    /// counts down on every step, and the trigger re-arms it once the mean
    /// of the last `tau_stop` certainties falls below the trigger threshold.
    pub fn test_step(
        &mut self,
        x: &Sample,
        oracle: &mut dyn LabelOracle,
    ) -> Result<StepOutcome, LearnerError> {
        if self.phase != Phase::Deployed {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Deployed,
            });
        }
        let theta_sl = self.theta_sl.expect("set by finalize_training");
        let theta_al = self.theta_al.expect("set by finalize_training");

        let prediction = self.window.predict(x, &self.config)?;
        if self.recent_certainties.len() == self.config.tau_stop {
            self.recent_certainties.pop_front();
        }
        self.recent_certainties.push_back(prediction.certainty);

        let credit_available = self.al_credit > 0;
        let (updated_with, label_requested) =
            if self.config.mode == LearnerMode::SlPlusBatch && credit_available {
                // Batch configuration: ground truth for every sample of the
                // AL window, regardless of certainty.
                let y = oracle.query(x.t())?;
                self.window.push(x.clone(), y, LabelOrigin::GroundTruth)?;
                self.labels_requested += 1;
                (UpdateKind::GroundTruth, true)
            } else if prediction.certainty > theta_sl {
                self.window
                    .push(x.clone(), prediction.label, LabelOrigin::SelfLabeled)?;
                (UpdateKind::SelfLabel, false)
            } else if credit_available && self.config.mode == LearnerMode::SlPlusAl {
                let y = oracle.query(x.t())?;
                self.window.push(x.clone(), y, LabelOrigin::GroundTruth)?;
                self.labels_requested += 1;
                (UpdateKind::GroundTruth, true)
            } else {
                (UpdateKind::None, false)
            };

        self.al_credit = self.al_credit.saturating_sub(1);
        if self.recent_certainties.len() == self.config.tau_stop && self.al_credit == 0 {
            let mean: f64 = self.recent_certainties.iter().sum::<f64>()
                / self.recent_certainties.len() as f64;
            if mean < theta_al {
                self.al_credit = self.config.tau_al;
            }
        }

        Ok(StepOutcome {
            prediction: Some(prediction),
            updated_with,
            label_requested,
        })
    }
}

impl OnlineLearner for HybridLearner {
    fn train_step(&mut self, x: &Sample, y: ClassLabel) -> Result<StepOutcome, LearnerError> {
        HybridLearner::train_step(self, x, y)
    }

    fn finalize_training(&mut self) -> Result<(), LearnerError> {
        HybridLearner::finalize_training(self)
    }

    fn test_step(
        &mut self,
        x: &Sample,
        oracle: &mut dyn LabelOracle,
    ) -> Result<StepOutcome, LearnerError> {
        HybridLearner::test_step(self, x, oracle)
    }

    fn labels_requested(&self) -> u64 {
        self.labels_requested
    }

    fn config(&self) -> &LearnerConfig {
        &self.config
    }

    fn al_credit(&self) -> usize {
        self.al_credit
    }

    fn theta_sl(&self) -> Option<f64> {
        self.theta_sl
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(features: &[f64], t: u64) -> Sample {
        Sample::new(features.to_vec(), t).unwrap()
    }

    fn unweighted(mode: LearnerMode) -> LearnerConfig {
        LearnerConfig {
            use_age_weight: false,
            use_gt_weight: false,
            mode,
            ..LearnerConfig::default()
        }
    }

    /// Oracle that serves labels from a fixed table.
    struct TableOracle(Vec<ClassLabel>);

    impl LabelOracle for TableOracle {
        fn query(&mut self, t: u64) -> Result<ClassLabel, OracleError> {
            self.0.get(t as usize).copied().ok_or(OracleError {
                t,
                message: "no label".into(),
            })
        }
    }

    /// Trains on a scripted sequence of one-dimensional (position, label)
    /// pairs with the weighting disabled, so thresholds and certainties can
    /// be computed by hand.
    fn scripted_learner(mut config: LearnerConfig, entries: &[(f64, u32)]) -> HybridLearner {
        config.use_age_weight = false;
        config.use_gt_weight = false;
        let mut learner = HybridLearner::new(config).unwrap();
        for (t, (x, label)) in entries.iter().enumerate() {
            learner
                .train_step(&sample(&[*x], t as u64), ClassLabel(*label))
                .unwrap();
        }
        learner
    }

    /// Training script whose window ends as two class-0 entries at x=0 and
    /// three class-1 entries at x=2, with every recorded certainty at or
    /// within 1e-12 of 1.0: a query at x=1 then scores class 1 at certainty
    /// 0.6, below the calibrated threshold.
    const SPLIT_WINDOW: [(f64, u32); 5] = [(0.0, 0), (0.0, 0), (2.0, 1), (2.0, 1), (2.0, 1)];

    #[test]
    fn first_train_step_abstains() {
        let mut learner = HybridLearner::new(unweighted(LearnerMode::SlPlusAl)).unwrap();
        let outcome = learner.train_step(&sample(&[0.0], 0), ClassLabel(0)).unwrap();
        assert!(outcome.prediction.is_none());
        assert_eq!(outcome.updated_with, UpdateKind::GroundTruth);
        assert_eq!(learner.window().len(), 1);
        assert!(learner.calibration().is_empty());
    }

    #[test]
    fn correct_prediction_feeds_calibration() {
        let mut learner = HybridLearner::new(unweighted(LearnerMode::SlPlusAl)).unwrap();
        learner.train_step(&sample(&[0.0], 0), ClassLabel(0)).unwrap();
        let outcome = learner.train_step(&sample(&[0.1], 1), ClassLabel(0)).unwrap();
        assert_eq!(outcome.prediction.unwrap().label, ClassLabel(0));
        assert_eq!(learner.calibration().len(), 1);
    }

    #[test]
    fn wrong_prediction_updates_window_but_not_calibration() {
        let mut learner = HybridLearner::new(unweighted(LearnerMode::SlPlusAl)).unwrap();
        learner.train_step(&sample(&[0.0], 0), ClassLabel(0)).unwrap();
        learner.train_step(&sample(&[0.1], 1), ClassLabel(1)).unwrap();
        assert_eq!(learner.window().len(), 2);
        assert!(learner.calibration().is_empty());
    }

    #[test]
    fn quantile_interpolates_linearly() {
        assert_eq!(quantile_linear(&[0.2, 0.4, 0.6, 0.8], 0.25), Some(0.35));
        assert_eq!(quantile_linear(&[1.0, 1.0, 1.0, 1.0], 0.25), Some(1.0));
        assert_eq!(quantile_linear(&[], 0.25), None);
        // Order must not matter.
        assert_eq!(quantile_linear(&[0.8, 0.2, 0.6, 0.4], 0.25), Some(0.35));
    }

    #[test]
    fn finalize_sets_thresholds_and_phase() {
        // All correct certainties are exactly 1.0 here.
        let mut learner =
            scripted_learner(unweighted(LearnerMode::SlPlusAl), &[(0.0, 0); 4]);
        learner.finalize_training().unwrap();
        assert_eq!(learner.theta_sl(), Some(1.0));
        assert!((learner.theta_al().unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(learner.phase(), Phase::Deployed);
    }

    #[test]
    fn finalize_without_correct_predictions_errors() {
        let mut learner = HybridLearner::new(unweighted(LearnerMode::SlPlusAl)).unwrap();
        learner.train_step(&sample(&[0.0], 0), ClassLabel(0)).unwrap();
        let err = learner.finalize_training().unwrap_err();
        assert!(matches!(err, LearnerError::EmptyCalibration));
    }

    #[test]
    fn phase_is_enforced() {
        let mut learner =
            scripted_learner(unweighted(LearnerMode::SlPlusAl), &[(0.0, 0); 4]);
        let mut oracle = TableOracle(vec![ClassLabel(0); 64]);
        assert!(matches!(
            learner.test_step(&sample(&[0.0], 9), &mut oracle),
            Err(LearnerError::WrongPhase { expected: Phase::Deployed })
        ));
        learner.finalize_training().unwrap();
        assert!(matches!(
            learner.train_step(&sample(&[0.0], 9), ClassLabel(0)),
            Err(LearnerError::WrongPhase { expected: Phase::Training })
        ));
        assert!(matches!(
            learner.finalize_training(),
            Err(LearnerError::WrongPhase { expected: Phase::Training })
        ));
    }

    #[test]
    fn confident_prediction_self_labels() {
        // Alternating labels at one point leave calibration at [0.5, 0.5]
        // (ties resolve to class 0, certainty 0.5) and the deployed window
        // at three zeros vs two ones: certainty 0.6 > theta_sl = 0.5.
        let mut config = unweighted(LearnerMode::SlPlusAl);
        config.tau_stop = 4;
        let mut learner = scripted_learner(
            config,
            &[(0.0, 0), (0.0, 1), (0.0, 0), (0.0, 1), (0.0, 0)],
        );
        learner.finalize_training().unwrap();
        assert_eq!(learner.theta_sl(), Some(0.5));
        let mut oracle = TableOracle(vec![ClassLabel(0); 64]);
        let outcome = learner.test_step(&sample(&[0.0], 10), &mut oracle).unwrap();
        assert_eq!(outcome.updated_with, UpdateKind::SelfLabel);
        assert!(!outcome.label_requested);
        assert_eq!(learner.labels_requested(), 0);
    }

    #[test]
    fn sl_only_emits_predictions_but_never_queries() {
        let mut config = unweighted(LearnerMode::SlOnly);
        config.tau_stop = 2;
        config.tau_al = 3;
        let mut learner = scripted_learner(config, &SPLIT_WINDOW);
        learner.finalize_training().unwrap();
        let mut oracle = TableOracle(vec![ClassLabel(0); 64]);
        let mut credit_was_armed = false;
        for i in 0..10 {
            let outcome = learner.test_step(&sample(&[1.0], 10 + i), &mut oracle).unwrap();
            assert!(outcome.prediction.is_some());
            assert_eq!(outcome.updated_with, UpdateKind::None);
            credit_was_armed |= learner.al_credit() > 0;
        }
        // The trigger arms credit in this script, but SlOnly never spends it.
        assert!(credit_was_armed);
        assert_eq!(learner.labels_requested(), 0);
        assert_eq!(learner.window().len(), 5);
    }

    #[test]
    fn trigger_arms_credit_and_al_queries_spend_it() {
        let mut config = unweighted(LearnerMode::SlPlusAl);
        config.tau_stop = 4;
        config.tau_al = 3;
        let mut learner = scripted_learner(config, &SPLIT_WINDOW);
        learner.finalize_training().unwrap();
        let theta = learner.theta_sl().unwrap();
        assert!(theta > 0.99, "scripted calibration should sit at ~1.0, got {theta}");
        let mut oracle = TableOracle(vec![ClassLabel(1); 64]);
        // Warm-up: tau_stop certainties must accumulate before the trigger.
        for i in 0..3 {
            let outcome = learner.test_step(&sample(&[1.0], 5 + i), &mut oracle).unwrap();
            assert!((outcome.prediction.unwrap().certainty - 0.6).abs() < 1e-12);
            assert_eq!(outcome.updated_with, UpdateKind::None);
            assert_eq!(learner.al_credit(), 0);
        }
        // Fourth step fills the history; mean 0.6 < theta_al ~ 0.9 fires.
        let outcome = learner.test_step(&sample(&[1.0], 8), &mut oracle).unwrap();
        assert_eq!(outcome.updated_with, UpdateKind::None);
        assert_eq!(learner.al_credit(), 3);
        // Credit 3: the next low-certainty sample is queried, credit drops.
        let outcome = learner.test_step(&sample(&[1.0], 9), &mut oracle).unwrap();
        assert_eq!(outcome.updated_with, UpdateKind::GroundTruth);
        assert!(outcome.label_requested);
        assert_eq!(learner.al_credit(), 2);
        assert_eq!(learner.labels_requested(), 1);
    }

    #[test]
    fn batch_mode_queries_every_sample_in_the_al_window() {
        let mut config = unweighted(LearnerMode::SlPlusBatch);
        config.tau_stop = 2;
        config.tau_al = 2;
        let mut learner = scripted_learner(config, &SPLIT_WINDOW);
        learner.finalize_training().unwrap();
        let mut oracle = TableOracle(vec![ClassLabel(1); 64]);
        learner.test_step(&sample(&[1.0], 5), &mut oracle).unwrap();
        learner.test_step(&sample(&[1.0], 6), &mut oracle).unwrap();
        assert_eq!(learner.al_credit(), 2);
        // Every sample of the batch window is a ground-truth update, even
        // when its certainty would have allowed self-labeling.
        let o1 = learner.test_step(&sample(&[1.0], 7), &mut oracle).unwrap();
        let o2 = learner.test_step(&sample(&[2.0], 8), &mut oracle).unwrap();
        assert_eq!(o1.updated_with, UpdateKind::GroundTruth);
        assert!(o2.prediction.unwrap().certainty > 0.9);
        assert_eq!(o2.updated_with, UpdateKind::GroundTruth);
        assert_eq!(learner.labels_requested(), 2);
    }

    #[test]
    fn oracle_failure_propagates() {
        let mut config = unweighted(LearnerMode::SlPlusBatch);
        config.tau_stop = 2;
        config.tau_al = 2;
        let mut learner = scripted_learner(config, &SPLIT_WINDOW);
        learner.finalize_training().unwrap();
        let mut good = TableOracle(vec![ClassLabel(1); 64]);
        learner.test_step(&sample(&[1.0], 5), &mut good).unwrap();
        learner.test_step(&sample(&[1.0], 6), &mut good).unwrap();
        let mut empty = TableOracle(vec![]);
        let err = learner.test_step(&sample(&[1.0], 7), &mut empty).unwrap_err();
        assert!(matches!(err, LearnerError::Oracle(_)));
    }

    #[test]
    fn replay_is_bit_identical() {
        let config = LearnerConfig {
            mode: LearnerMode::SlPlusAl,
            tau_stop: 4,
            tau_al: 3,
            ..LearnerConfig::default()
        };
        let run = |config: LearnerConfig| {
            let mut learner = HybridLearner::new(config).unwrap();
            let mut outcomes = Vec::new();
            for t in 0..30u64 {
                let label = ClassLabel((t % 2) as u32);
                let x = sample(&[(t % 7) as f64 * 0.1, label.0 as f64], t);
                learner.train_step(&x, label).unwrap();
            }
            learner.finalize_training().unwrap();
            let mut oracle = TableOracle((0..80).map(|t| ClassLabel((t % 2) as u32)).collect());
            for t in 30..60u64 {
                let x = sample(&[(t % 5) as f64 * 0.2, (t % 2) as f64], t);
                outcomes.push(learner.test_step(&x, &mut oracle).unwrap());
            }
            outcomes
        };
        assert_eq!(run(config.clone()), run(config));
    }
}
