//! Prequential (test-then-train) evaluation, accuracy and label accounting,
//! multi-run aggregation, and the brute-force reference for the decision
//! rule.
//!
//! The loss at each deployed step is the zero-one loss of the prediction
//! made before any update of that step; accuracy is reported over the
//! evaluation segment only. Training labels are free in this setup, so
//! `labels_requested` counts deployment-phase oracle queries alone (the
//! supervised baseline therefore counts every deployed sample).

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::learner::{LearnerError, OnlineLearner, UpdateKind};
use crate::streams::{TestStream, TrainStream};
use crate::types::{ClassLabel, LearnerConfig, Prediction, Sample, WindowEntry};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("deployed learner abstained at t={t}")]
    AbstainInDeployment { t: u64 },
    #[error("aggregate group '{0}' is empty")]
    EmptyGroup(String),
    #[error("aggregate expects one scenario, found '{a}' and '{b}'")]
    MixedScenarios { a: String, b: String },
    #[error("audit sink error: {0}")]
    AuditIo(#[from] std::io::Error),
}

/// Identity of one run in the experiment matrix.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub method: String,
    pub scenario: String,
    pub seed: u64,
}

/// Everything one prequential run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: String,
    pub scenario: String,
    pub seed: u64,
    /// Cumulative zero-one error after each deployed step.
    pub itte_trace: Vec<f64>,
    /// `1 - final ITTE` over the evaluation segment.
    pub accuracy: f64,
    pub labels_requested: u64,
    /// Final interleaved error over the training segment (abstains count as
    /// errors); recorded but not part of the main tables.
    pub train_itte: f64,
    /// Content hash of the stream this run consumed.
    pub stream_hash: String,
    pub config_snapshot: LearnerConfig,
}

/// One aggregated table row.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub mean_accuracy: f64,
    /// Population standard deviation (n divisor).
    pub std_accuracy: f64,
    pub mean_labels_requested: f64,
}

/// One line of the per-step audit log (JSON lines).
#[derive(Debug, Clone, Serialize)]
pub struct AuditRecord {
    pub t: u64,
    pub phase: &'static str,
    pub y_hat: Option<u32>,
    pub certainty: Option<f64>,
    pub action: &'static str,
    pub credit: usize,
}

fn action_name(kind: UpdateKind) -> &'static str {
    match kind {
        UpdateKind::GroundTruth => "ground_truth",
        UpdateKind::SelfLabel => "self_label",
        UpdateKind::None => "none",
    }
}

/// Drives one full run: interleaved training over the labeled prefix,
/// threshold calibration, then test-then-train over the evaluation segment.
/// The loss of each deployed step is computed from the prediction the
/// learner emitted before updating itself on that sample.
pub fn run_prequential(
    learner: &mut dyn OnlineLearner,
    train: &TrainStream<'_>,
    test: &TestStream<'_>,
    oracle: &mut dyn crate::learner::LabelOracle,
    meta: RunMeta,
    stream_hash: String,
    mut audit: Option<&mut dyn Write>,
) -> Result<RunResult, EvalError> {
    let mut train_errors = 0usize;
    for ls in train.iter() {
        let outcome = learner.train_step(&ls.sample, ls.label)?;
        let correct = outcome
            .prediction
            .as_ref()
            .map(|p| p.label == ls.label)
            .unwrap_or(false);
        if !correct {
            train_errors += 1;
        }
        if let Some(sink) = audit.as_deref_mut() {
            write_audit(sink, &ls.sample, "train", &outcome.prediction, "ground_truth", 0)?;
        }
    }
    let train_itte = if train.is_empty() {
        0.0
    } else {
        train_errors as f64 / train.len() as f64
    };

    learner.finalize_training()?;

    let mut trace = Vec::with_capacity(test.len());
    let mut errors = 0usize;
    for i in 0..test.len() {
        let x = test.sample(i);
        let outcome = learner.test_step(x, oracle)?;
        let prediction = outcome
            .prediction
            .ok_or(EvalError::AbstainInDeployment { t: x.t() })?;
        if prediction.label != test.true_label(i) {
            errors += 1;
        }
        trace.push(errors as f64 / (i + 1) as f64);
        if let Some(sink) = audit.as_deref_mut() {
            write_audit(
                sink,
                x,
                "deployed",
                &Some(prediction),
                action_name(outcome.updated_with),
                learner.al_credit(),
            )?;
        }
    }
    let accuracy = 1.0 - trace.last().copied().unwrap_or(0.0);
    Ok(RunResult {
        method: meta.method,
        scenario: meta.scenario,
        seed: meta.seed,
        itte_trace: trace,
        accuracy,
        labels_requested: learner.labels_requested(),
        train_itte,
        stream_hash,
        config_snapshot: learner.config().clone(),
    })
}

fn write_audit(
    sink: &mut dyn Write,
    x: &Sample,
    phase: &'static str,
    prediction: &Option<Prediction>,
    action: &'static str,
    credit: usize,
) -> Result<(), EvalError> {
    let record = AuditRecord {
        t: x.t(),
        phase,
        y_hat: prediction.as_ref().map(|p| p.label.0),
        certainty: prediction.as_ref().map(|p| p.certainty),
        action,
        credit,
    };
    serde_json::to_writer(&mut *sink, &record).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Groups results of one scenario by method and reports mean/std accuracy
/// (population std) and mean labels requested, sorted by method name.
pub fn aggregate(results: &[RunResult]) -> Result<Vec<AggregateRow>, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyGroup("<all>".into()));
    }
    let scenario = &results[0].scenario;
    if let Some(other) = results.iter().find(|r| &r.scenario != scenario) {
        return Err(EvalError::MixedScenarios {
            a: scenario.clone(),
            b: other.scenario.clone(),
        });
    }
    let mut groups: BTreeMap<&str, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        groups.entry(&r.method).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (method, runs) in groups {
        let n = runs.len() as f64;
        let mean_accuracy = runs.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let variance = runs
            .iter()
            .map(|r| (r.accuracy - mean_accuracy).powi(2))
            .sum::<f64>()
            / n;
        let mean_labels_requested = runs.iter().map(|r| r.labels_requested as f64).sum::<f64>() / n;
        rows.push(AggregateRow {
            method: method.to_string(),
            mean_accuracy,
            std_accuracy: variance.sqrt(),
            mean_labels_requested,
        });
    }
    Ok(rows)
}

/// Direct full-scan translation of the decision rule and certainty formula;
/// the test oracle against which the window implementation is checked. It
/// shares no code with `SlidingWindow::predict`.
pub fn brute_force_reference(
    window_contents: &[WindowEntry],
    x: &Sample,
    config: &LearnerConfig,
) -> Prediction {
    assert!(!window_contents.is_empty(), "reference needs a non-empty window");
    let epsilon = 1e-12;

    // Order by insertion to assign rank-based age weights independently.
    let mut by_insertion: Vec<&WindowEntry> = window_contents.iter().collect();
    by_insertion.sort_by_key(|e| e.inserted_at);
    let m = by_insertion.len();
    let age_of = |rank: usize| -> f64 {
        if !config.use_age_weight || m == 1 {
            1.0
        } else {
            config.age_weight_oldest
                + (1.0 - config.age_weight_oldest) * rank as f64 / (m - 1) as f64
        }
    };
    let origin_of = |entry: &WindowEntry| -> f64 {
        if !config.use_gt_weight {
            1.0
        } else {
            match entry.origin {
                crate::types::LabelOrigin::GroundTruth => config.gt_weight,
                crate::types::LabelOrigin::SelfLabeled => config.sl_weight,
            }
        }
    };

    // Exhaustive distance sort with the newer-first tie-break.
    let mut annotated: Vec<(f64, u64, usize)> = by_insertion
        .iter()
        .enumerate()
        .map(|(rank, e)| {
            let dist = e
                .sample
                .features()
                .iter()
                .zip(x.features())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (dist, e.inserted_at, rank)
        })
        .collect();
    annotated.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(&a.1)));
    annotated.truncate(config.k.min(m));

    // Vote of every class present among the neighbors.
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for (dist, _, rank) in &annotated {
        let entry = by_insertion[*rank];
        let weight = origin_of(entry) * age_of(*rank);
        *scores.entry(entry.label.0).or_insert(0.0) += weight / dist.max(epsilon);
    }
    let mut label = ClassLabel(u32::MAX);
    let mut best = f64::NEG_INFINITY;
    for (&id, &score) in &scores {
        if score > best {
            best = score;
            label = ClassLabel(id);
        }
    }

    // Normalizers: means of the k largest weights over the whole window.
    let take = config.k.min(m);
    let mut all_age: Vec<f64> = (0..m).map(age_of).collect();
    let mut all_gt: Vec<f64> = by_insertion.iter().map(|e| origin_of(e)).collect();
    all_age.sort_by(|a, b| b.total_cmp(a));
    all_gt.sort_by(|a, b| b.total_cmp(a));
    let omega_age: f64 = all_age[..take].iter().sum::<f64>() / take as f64;
    let omega_gt: f64 = all_gt[..take].iter().sum::<f64>() / take as f64;

    let winning: f64 = annotated
        .iter()
        .filter(|(_, _, rank)| by_insertion[*rank].label == label)
        .map(|(dist, _, rank)| {
            let entry = by_insertion[*rank];
            origin_of(entry) * age_of(*rank) / dist.max(epsilon)
        })
        .sum();
    let inverse_mass: f64 = annotated.iter().map(|(d, _, _)| 1.0 / d.max(epsilon)).sum();
    let certainty = (winning / (omega_gt * omega_age * inverse_mass)).clamp(0.0, 1.0);
    Prediction { label, certainty }
}

// Re-exported so callers can flag their own zero distances consistently.
#[allow(dead_code)]
const _: f64 = MIN_DISTANCE;
