//! Stream sources: deterministic synthetic drift generators, dataset
//! ingestion (sparse and dense text formats), PCA reduction, and the
//! train/test split with its label oracle.

mod generate;
mod io;
mod pca;

pub use generate::{default_trajectories, generate, Scenario, ScenarioSpec, Trajectory};
pub use io::{load_dense, load_sparse, write_dense, SparseDataset};
pub use pca::{fit_pca, fit_pca_sparse, reduce_dataset, PcaModel};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::learner::{LabelOracle, OracleError};
use crate::types::{ClassLabel, LabeledSample, Sample};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("invalid stream spec: {0}")]
    InvalidSpec(String),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("split would leave an empty {0} segment")]
    EmptySegment(&'static str),
    #[error("{path}:{line}: malformed line: {message}")]
    MalformedLine {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dataset {0} is empty")]
    EmptyDataset(String),
    #[error("dataset {name} has {classes} class(es); at least 2 are required")]
    TooFewClasses { name: String, classes: usize },
    #[error("input rank {rank} is below the requested {requested} components")]
    RankDeficient { rank: usize, requested: usize },
    #[error("pca requires more samples than components: {samples} samples for {requested} components")]
    TooFewSamples { samples: usize, requested: usize },
    #[error("pca output dimension {requested} exceeds input dimension {dim}")]
    BadOutDim { requested: usize, dim: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A fully materialized, finite stream with dense labels in `[0, C)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub n_classes: u32,
    pub dim: usize,
    pub name: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// SHA-256 over a canonical byte encoding of every sample; used to
    /// assert that all methods of one run consumed the identical stream.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for ls in &self.samples {
            hasher.update(ls.sample.t().to_le_bytes());
            hasher.update(ls.label.0.to_le_bytes());
            for v in ls.sample.features() {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The labeled prefix of a stream.
#[derive(Debug, Clone, Copy)]
pub struct TrainStream<'a> {
    samples: &'a [LabeledSample],
}

impl<'a> TrainStream<'a> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a LabeledSample> {
        self.samples.iter()
    }
}

/// The evaluation remainder of a stream. Labels stay hidden: learners reach
/// them only through the counting oracle, the harness through
/// [`TestStream::true_label`] when scoring.
#[derive(Debug, Clone, Copy)]
pub struct TestStream<'a> {
    samples: &'a [LabeledSample],
    offset: u64,
}

impl<'a> TestStream<'a> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, i: usize) -> &'a Sample {
        &self.samples[i].sample
    }

    /// True label for scoring; not for learner consumption.
    pub fn true_label(&self, i: usize) -> ClassLabel {
        self.samples[i].label
    }

    pub fn oracle(&self) -> TestOracle<'a> {
        TestOracle {
            samples: self.samples,
            offset: self.offset,
            queries: 0,
        }
    }
}

/// Oracle over the test segment, keyed by global arrival index; counts how
/// often it was asked.
#[derive(Debug)]
pub struct TestOracle<'a> {
    samples: &'a [LabeledSample],
    offset: u64,
    queries: u64,
}

impl TestOracle<'_> {
    pub fn queries(&self) -> u64 {
        self.queries
    }
}

impl LabelOracle for TestOracle<'_> {
    fn query(&mut self, t: u64) -> Result<ClassLabel, OracleError> {
        let index = t.checked_sub(self.offset).ok_or_else(|| OracleError {
            t,
            message: "index before the test segment".into(),
        })?;
        let ls = self.samples.get(index as usize).ok_or_else(|| OracleError {
            t,
            message: "index beyond the test segment".into(),
        })?;
        self.queries += 1;
        Ok(ls.label)
    }
}

/// Splits a stream into the labeled prefix (`floor(fraction * n)` samples)
/// and the hidden-label remainder, preserving order.
pub fn split(
    dataset: &Dataset,
    train_fraction: f64,
) -> Result<(TrainStream<'_>, TestStream<'_>), StreamError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(StreamError::InvalidFraction(train_fraction));
    }
    let n = dataset.samples.len();
    let cut = (train_fraction * n as f64).floor() as usize;
    if cut == 0 {
        return Err(StreamError::EmptySegment("train"));
    }
    if cut >= n {
        return Err(StreamError::EmptySegment("test"));
    }
    let (train, test) = dataset.samples.split_at(cut);
    Ok((
        TrainStream { samples: train },
        TestStream {
            samples: test,
            offset: test[0].sample.t(),
        },
    ))
}
