//! Reference learners for the comparison: fully supervised, vanilla
//! self-labeling, fixed-budget active learning, and the budgeted AL+SL
//! hybrid.
//!
//! Vanilla self-labeling is the hybrid learner in `SlOnly` mode; the other
//! baselines live here. Budgeted baselines discard samples that are neither
//! queried nor (for AL+SL) confidently self-labeled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::learner::{
    CertaintyCalibration, LabelOracle, LearnerError, OnlineLearner, Phase, StepOutcome, UpdateKind,
};
use crate::types::{ClassLabel, ConfigError, LabelOrigin, LearnerConfig, Sample};
use crate::window::SlidingWindow;

/// How a budgeted baseline picks the samples it spends labels on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetStrategy {
    /// Query each sample with probability equal to the budget.
    RandomRate,
    /// Query when the certainty falls below an adaptive, randomized
    /// threshold (threshold shrinks after a query, grows otherwise).
    VariableUncertainty,
}

impl BudgetStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            BudgetStrategy::RandomRate => "random_rate",
            BudgetStrategy::VariableUncertainty => "variable_uncertainty",
        }
    }
}

/// Threshold adjustment step of the variable-uncertainty strategy.
pub const VARIABLE_UNCERTAINTY_STEP: f64 = 0.01;
/// Standard deviation of the threshold randomization factor.
pub const VARIABLE_UNCERTAINTY_RANDOMIZATION: f64 = 1.0;

/// Keeps the fraction of oracle queries at or below a fixed budget over
/// every stream prefix: `spent <= ceil(budget * seen) + 1` always holds.
#[derive(Debug, Clone)]
pub struct BudgetManager {
    budget: f64,
    spent: u64,
    seen: u64,
    strategy: BudgetStrategy,
    threshold: f64,
    rng: ChaCha8Rng,
}

impl BudgetManager {
    pub fn new(budget: f64, strategy: BudgetStrategy, seed: u64) -> Result<Self, ConfigError> {
        if !(0.0..=1.0).contains(&budget) || !budget.is_finite() {
            return Err(ConfigError {
                field: "budget",
                message: "budget must lie in [0, 1]".into(),
            });
        }
        Ok(Self {
            budget,
            spent: 0,
            seen: 0,
            strategy,
            threshold: 1.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn spent(&self) -> u64 {
        self.spent
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Registers one arriving sample and decides whether to query its label.
    /// The prefix cap is enforced before the strategy is consulted.
    pub fn decide(&mut self, certainty: f64) -> bool {
        self.seen += 1;
        if (self.spent as f64) >= self.budget * self.seen as f64 {
            return false;
        }
        let query = match self.strategy {
            BudgetStrategy::RandomRate => self.rng.random::<f64>() < self.budget,
            BudgetStrategy::VariableUncertainty => {
                let noise: f64 = self.rng.sample(StandardNormal);
                let eta = 1.0 + VARIABLE_UNCERTAINTY_RANDOMIZATION * noise;
                if certainty < self.threshold * eta {
                    self.threshold *= 1.0 - VARIABLE_UNCERTAINTY_STEP;
                    true
                } else {
                    self.threshold *= 1.0 + VARIABLE_UNCERTAINTY_STEP;
                    false
                }
            }
        };
        if query {
            self.spent += 1;
        }
        query
    }
}

/// Learns from the fully labeled stream; every deployed sample costs one
/// oracle query.
#[derive(Debug, Clone)]
pub struct SupervisedLearner {
    window: SlidingWindow,
    config: LearnerConfig,
    labels_requested: u64,
    phase: Phase,
}

impl SupervisedLearner {
    pub fn new(config: LearnerConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            window: SlidingWindow::new(config.tau),
            config,
            labels_requested: 0,
            phase: Phase::Training,
        })
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }
}

/// Predict-then-update with the true label; shared by every baseline's
/// training phase.
fn supervised_update(
    window: &mut SlidingWindow,
    config: &LearnerConfig,
    x: &Sample,
    y: ClassLabel,
) -> Result<StepOutcome, LearnerError> {
    let prediction = if window.is_empty() {
        None
    } else {
        Some(window.predict(x, config)?)
    };
    window.push(x.clone(), y, LabelOrigin::GroundTruth)?;
    Ok(StepOutcome {
        prediction,
        updated_with: UpdateKind::GroundTruth,
        label_requested: false,
    })
}

impl OnlineLearner for SupervisedLearner {
    fn train_step(&mut self, x: &Sample, y: ClassLabel) -> Result<StepOutcome, LearnerError> {
        if self.phase != Phase::Training {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Training,
            });
        }
        supervised_update(&mut self.window, &self.config, x, y)
    }

    fn finalize_training(&mut self) -> Result<(), LearnerError> {
        if self.phase != Phase::Training {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Training,
            });
        }
        self.phase = Phase::Deployed;
        Ok(())
    }

    fn test_step(
        &mut self,
        x: &Sample,
        oracle: &mut dyn LabelOracle,
    ) -> Result<StepOutcome, LearnerError> {
        if self.phase != Phase::Deployed {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Deployed,
            });
        }
        let prediction = self.window.predict(x, &self.config)?;
        let y = oracle.query(x.t())?;
        self.window.push(x.clone(), y, LabelOrigin::GroundTruth)?;
        self.labels_requested += 1;
        Ok(StepOutcome {
            prediction: Some(prediction),
            updated_with: UpdateKind::GroundTruth,
            label_requested: true,
        })
    }

    fn labels_requested(&self) -> u64 {
        self.labels_requested
    }

    fn config(&self) -> &LearnerConfig {
        &self.config
    }
}

/// Fixed-budget active learning: the strategy decides which samples are
/// worth a label; everything else is discarded.
#[derive(Debug, Clone)]
pub struct BudgetAlLearner {
    window: SlidingWindow,
    config: LearnerConfig,
    manager: BudgetManager,
    labels_requested: u64,
    phase: Phase,
}

impl BudgetAlLearner {
    pub fn new(config: LearnerConfig, manager: BudgetManager) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            window: SlidingWindow::new(config.tau),
            config,
            manager,
            labels_requested: 0,
            phase: Phase::Training,
        })
    }

    pub fn manager(&self) -> &BudgetManager {
        &self.manager
    }
}

impl OnlineLearner for BudgetAlLearner {
    fn train_step(&mut self, x: &Sample, y: ClassLabel) -> Result<StepOutcome, LearnerError> {
        if self.phase != Phase::Training {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Training,
            });
        }
        supervised_update(&mut self.window, &self.config, x, y)
    }

    fn finalize_training(&mut self) -> Result<(), LearnerError> {
        if self.phase != Phase::Training {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Training,
            });
        }
        self.phase = Phase::Deployed;
        Ok(())
    }

    fn test_step(
        &mut self,
        x: &Sample,
        oracle: &mut dyn LabelOracle,
    ) -> Result<StepOutcome, LearnerError> {
        if self.phase != Phase::Deployed {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Deployed,
            });
        }
        let prediction = self.window.predict(x, &self.config)?;
        if self.manager.decide(prediction.certainty) {
            let y = oracle.query(x.t())?;
            self.window.push(x.clone(), y, LabelOrigin::GroundTruth)?;
            self.labels_requested += 1;
            Ok(StepOutcome {
                prediction: Some(prediction),
                updated_with: UpdateKind::GroundTruth,
                label_requested: true,
            })
        } else {
            Ok(StepOutcome {
                prediction: Some(prediction),
                updated_with: UpdateKind::None,
                label_requested: false,
            })
        }
    }

    fn labels_requested(&self) -> u64 {
        self.labels_requested
    }

    fn config(&self) -> &LearnerConfig {
        &self.config
    }
}

/// Budgeted active learning with a self-labeling fallback: samples not
/// selected for querying are self-labeled when the prediction clears the
/// calibrated threshold, and discarded otherwise.
#[derive(Debug, Clone)]
pub struct AlPlusSlLearner {
    window: SlidingWindow,
    config: LearnerConfig,
    manager: BudgetManager,
    calibration: CertaintyCalibration,
    theta_sl: Option<f64>,
    labels_requested: u64,
    phase: Phase,
}

impl AlPlusSlLearner {
    pub fn new(config: LearnerConfig, manager: BudgetManager) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            window: SlidingWindow::new(config.tau),
            config,
            manager,
            calibration: CertaintyCalibration::default(),
            theta_sl: None,
            labels_requested: 0,
            phase: Phase::Training,
        })
    }

    pub fn manager(&self) -> &BudgetManager {
        &self.manager
    }

    /// Overrides the calibrated threshold; intended for degeneracy checks.
    pub fn force_theta_sl(&mut self, theta: f64) {
        self.theta_sl = Some(theta);
    }
}

impl OnlineLearner for AlPlusSlLearner {
    fn train_step(&mut self, x: &Sample, y: ClassLabel) -> Result<StepOutcome, LearnerError> {
        if self.phase != Phase::Training {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Training,
            });
        }
        let outcome = supervised_update(&mut self.window, &self.config, x, y)?;
        if let Some(p) = &outcome.prediction {
            if p.label == y {
                self.calibration.push(p.certainty);
            }
        }
        Ok(outcome)
    }

    fn finalize_training(&mut self) -> Result<(), LearnerError> {
        if self.phase != Phase::Training {
            return Err(LearnerError::WrongPhase {
                expected: Phase::Training,
            });
        }
        let theta = self
            .calibration
            .quantile(self.config.sl_quantile)
            .ok_or(LearnerError::EmptyCalibration)?;
        self.theta_sl = Some(theta);
        self.phase = Phase::Deployed;
        Ok(())
    }

    fn test_step(
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
        let prediction = self.window.predict(x, &self.config)?;
        if self.manager.decide(prediction.certainty) {
            let y = oracle.query(x.t())?;
            self.window.push(x.clone(), y, LabelOrigin::GroundTruth)?;
            self.labels_requested += 1;
            Ok(StepOutcome {
                prediction: Some(prediction),
                updated_with: UpdateKind::GroundTruth,
                label_requested: true,
            })
        } else if prediction.certainty > theta_sl {
            self.window
                .push(x.clone(), prediction.label, LabelOrigin::SelfLabeled)?;
            Ok(StepOutcome {
                prediction: Some(prediction),
                updated_with: UpdateKind::SelfLabel,
                label_requested: false,
            })
        } else {
            Ok(StepOutcome {
                prediction: Some(prediction),
                updated_with: UpdateKind::None,
                label_requested: false,
            })
        }
    }

    fn labels_requested(&self) -> u64 {
        self.labels_requested
    }

    fn config(&self) -> &LearnerConfig {
        &self.config
    }

    fn theta_sl(&self) -> Option<f64> {
        self.theta_sl
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{HybridLearner, OracleError};
    use crate::types::LearnerMode;

    fn sample(features: &[f64], t: u64) -> Sample {
        Sample::new(features.to_vec(), t).unwrap()
    }

    struct TableOracle(Vec<ClassLabel>);

    impl LabelOracle for TableOracle {
        fn query(&mut self, t: u64) -> Result<ClassLabel, OracleError> {
            self.0.get(t as usize).copied().ok_or(OracleError {
                t,
                message: "no label".into(),
            })
        }
    }

    /// Deterministic zig-zag stream over two 1-D clusters.
    fn toy_stream(n: usize) -> Vec<(Sample, ClassLabel)> {
        (0..n)
            .map(|t| {
                let label = ClassLabel((t % 2) as u32);
                let x = label.0 as f64 * 4.0 + ((t / 2) % 5) as f64 * 0.1;
                (sample(&[x], t as u64), label)
            })
            .collect()
    }

    fn config() -> LearnerConfig {
        LearnerConfig {
            use_age_weight: false,
            use_gt_weight: false,
            ..LearnerConfig::default()
        }
    }

    #[test]
    fn supervised_counts_every_deployed_sample() {
        let mut learner = SupervisedLearner::new(config()).unwrap();
        let stream = toy_stream(60);
        for (x, y) in &stream[..20] {
            learner.train_step(x, *y).unwrap();
        }
        learner.finalize_training().unwrap();
        let mut oracle = TableOracle(stream.iter().map(|(_, y)| *y).collect());
        for (x, _) in &stream[20..] {
            let outcome = learner.test_step(x, &mut oracle).unwrap();
            assert_eq!(outcome.updated_with, UpdateKind::GroundTruth);
            assert!(outcome.label_requested);
        }
        assert_eq!(learner.labels_requested(), 40);
    }

    #[test]
    fn supervised_window_matches_hybrid_training_effect() {
        // The training phases of the supervised baseline and the hybrid
        // learner share the predict-then-store behavior.
        let mut supervised = SupervisedLearner::new(config()).unwrap();
        let mut hybrid = HybridLearner::new(config()).unwrap();
        for (x, y) in toy_stream(50) {
            supervised.train_step(&x, y).unwrap();
            hybrid.train_step(&x, y).unwrap();
        }
        let a: Vec<_> = supervised.window().entries().cloned().collect();
        let b: Vec<_> = hybrid.window().entries().cloned().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_budget_never_queries() {
        let mgr = BudgetManager::new(0.0, BudgetStrategy::VariableUncertainty, 7).unwrap();
        let mut learner = BudgetAlLearner::new(config(), mgr).unwrap();
        let stream = toy_stream(200);
        for (x, y) in &stream[..20] {
            learner.train_step(x, *y).unwrap();
        }
        learner.finalize_training().unwrap();
        let initial: Vec<_> = learner.window.entries().cloned().collect();
        let mut oracle = TableOracle(stream.iter().map(|(_, y)| *y).collect());
        for (x, _) in &stream[20..] {
            let outcome = learner.test_step(x, &mut oracle).unwrap();
            assert_eq!(outcome.updated_with, UpdateKind::None);
        }
        assert_eq!(learner.labels_requested(), 0);
        let after: Vec<_> = learner.window.entries().cloned().collect();
        assert_eq!(initial, after);
    }

    #[test]
    fn full_budget_random_rate_equals_supervised() {
        let mgr = BudgetManager::new(1.0, BudgetStrategy::RandomRate, 7).unwrap();
        let mut budgeted = BudgetAlLearner::new(config(), mgr).unwrap();
        let mut supervised = SupervisedLearner::new(config()).unwrap();
        let stream = toy_stream(120);
        for (x, y) in &stream[..20] {
            budgeted.train_step(x, *y).unwrap();
            supervised.train_step(x, *y).unwrap();
        }
        budgeted.finalize_training().unwrap();
        supervised.finalize_training().unwrap();
        let labels: Vec<ClassLabel> = stream.iter().map(|(_, y)| *y).collect();
        let mut o1 = TableOracle(labels.clone());
        let mut o2 = TableOracle(labels);
        for (x, _) in &stream[20..] {
            let a = budgeted.test_step(x, &mut o1).unwrap();
            let b = supervised.test_step(x, &mut o2).unwrap();
            assert_eq!(a.prediction, b.prediction);
            assert_eq!(a.updated_with, UpdateKind::GroundTruth);
        }
        assert_eq!(budgeted.labels_requested(), supervised.labels_requested());
    }

    #[test]
    fn budget_cap_holds_on_every_prefix() {
        for strategy in [BudgetStrategy::RandomRate, BudgetStrategy::VariableUncertainty] {
            for seed in 0..5 {
                let mut mgr = BudgetManager::new(0.05, strategy, seed).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
                for _ in 0..1800 {
                    mgr.decide(rng.random::<f64>());
                    let cap = (0.05 * mgr.seen() as f64).ceil() as u64 + 1;
                    assert!(mgr.spent() <= cap, "spent {} > cap {}", mgr.spent(), cap);
                }
            }
        }
    }

    #[test]
    fn random_rate_long_run_rate_approaches_budget() {
        let mut mgr = BudgetManager::new(0.05, BudgetStrategy::RandomRate, 11).unwrap();
        for _ in 0..20_000 {
            mgr.decide(0.5);
        }
        let rate = mgr.spent() as f64 / mgr.seen() as f64;
        assert!(
            (0.03..=0.0501).contains(&rate),
            "long-run rate {rate} not near 0.05"
        );
    }

    #[test]
    fn al_plus_sl_branches() {
        // Forced theta: certainty above it self-labels when not queried.
        let mgr = BudgetManager::new(0.0, BudgetStrategy::VariableUncertainty, 3).unwrap();
        let mut learner = AlPlusSlLearner::new(config(), mgr).unwrap();
        let stream = toy_stream(40);
        for (x, y) in &stream[..20] {
            learner.train_step(x, *y).unwrap();
        }
        learner.finalize_training().unwrap();
        learner.force_theta_sl(0.9);
        let mut oracle = TableOracle(stream.iter().map(|(_, y)| *y).collect());
        // Budget 0: never queried; toy stream predictions are unanimous, so
        // certainty 1.0 > 0.9 self-labels.
        let (x, _) = &stream[20];
        let outcome = learner.test_step(x, &mut oracle).unwrap();
        assert_eq!(outcome.updated_with, UpdateKind::SelfLabel);
        // An unreachable threshold discards instead.
        learner.force_theta_sl(2.0);
        let (x, _) = &stream[21];
        let outcome = learner.test_step(x, &mut oracle).unwrap();
        assert_eq!(outcome.updated_with, UpdateKind::None);
    }

    #[test]
    fn al_plus_sl_with_zero_budget_degenerates_to_vanilla_sl() {
        let stream = toy_stream(150);
        let labels: Vec<ClassLabel> = stream.iter().map(|(_, y)| *y).collect();

        let mgr = BudgetManager::new(0.0, BudgetStrategy::VariableUncertainty, 5).unwrap();
        let mut al_sl = AlPlusSlLearner::new(config(), mgr).unwrap();
        let mut vanilla = HybridLearner::new(config().with_mode(LearnerMode::SlOnly)).unwrap();
        for (x, y) in &stream[..30] {
            al_sl.train_step(x, *y).unwrap();
            vanilla.train_step(x, *y).unwrap();
        }
        al_sl.finalize_training().unwrap();
        OnlineLearner::finalize_training(&mut vanilla).unwrap();
        assert_eq!(OnlineLearner::theta_sl(&al_sl), OnlineLearner::theta_sl(&vanilla));
        let mut o1 = TableOracle(labels.clone());
        let mut o2 = TableOracle(labels.clone());
        for (x, _) in &stream[30..] {
            let a = al_sl.test_step(x, &mut o1).unwrap();
            let b = OnlineLearner::test_step(&mut vanilla, x, &mut o2).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(al_sl.labels_requested(), 0);
    }

    #[test]
    fn al_plus_sl_with_unreachable_theta_degenerates_to_budget_al() {
        let stream = toy_stream(150);
        let labels: Vec<ClassLabel> = stream.iter().map(|(_, y)| *y).collect();

        let mgr1 = BudgetManager::new(0.2, BudgetStrategy::VariableUncertainty, 9).unwrap();
        let mgr2 = BudgetManager::new(0.2, BudgetStrategy::VariableUncertainty, 9).unwrap();
        let mut al_sl = AlPlusSlLearner::new(config(), mgr1).unwrap();
        let mut al_only = BudgetAlLearner::new(config(), mgr2).unwrap();
        for (x, y) in &stream[..30] {
            al_sl.train_step(x, *y).unwrap();
            al_only.train_step(x, *y).unwrap();
        }
        al_sl.finalize_training().unwrap();
        al_only.finalize_training().unwrap();
        al_sl.force_theta_sl(f64::INFINITY);
        let mut o1 = TableOracle(labels.clone());
        let mut o2 = TableOracle(labels);
        for (x, _) in &stream[30..] {
            let a = al_sl.test_step(x, &mut o1).unwrap();
            let b = al_only.test_step(x, &mut o2).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(al_sl.labels_requested(), al_only.labels_requested());
    }
}
