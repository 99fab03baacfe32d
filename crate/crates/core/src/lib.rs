//! Online learning from scarcely labeled, gradually drifting data streams.
//!
//! The centerpiece is a sliding-window weighted k-NN classifier that keeps
//! itself up to date by self-labeling confident predictions and, when its
//! certainty degrades, by opening short on-demand active-learning windows in
//! which ground-truth labels may be requested. The crate also ships the
//! reference baselines (fully supervised, vanilla self-labeling, fixed-budget
//! active learning, and a budgeted AL+SL hybrid), deterministic synthetic
//! drift generators, dataset ingestion with PCA reduction, a prequential
//! evaluation harness, and the experiment runner behind the `driftknn` CLI.

pub mod baselines;
pub mod eval;
pub mod experiment;
pub mod learner;
pub mod streams;
pub mod types;
pub mod window;

pub use learner::{HybridLearner, LabelOracle, OnlineLearner, StepOutcome, UpdateKind};
pub use types::{
    ClassLabel, LabelOrigin, LabeledSample, LearnerConfig, LearnerMode, Prediction, Sample,
};
pub use window::SlidingWindow;
