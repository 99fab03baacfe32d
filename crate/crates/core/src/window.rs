//! The sliding-window memory and the weighted k-NN decision rule with its
//! certainty estimate.
//!
//! The decision rule scores each class by summing, over the k nearest stored
//! samples, the product of a label-origin weight and a recency weight divided
//! by the Euclidean distance to the query. The certainty divides the winning
//! score by the total inverse-distance mass scaled by two normalizing
//! factors, each the mean of the k maximal per-entry weights over the whole
//! window. A window of 100 entries makes a linear scan the right tool; there
//! is deliberately no spatial index.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::types::{ClassLabel, LabelOrigin, LearnerConfig, Prediction, Sample, WindowEntry};

/// Distances are floored at this value before inversion so that exact
/// duplicates dominate the vote instead of dividing by zero.
pub const MIN_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WindowError {
    #[error("window is empty")]
    EmptyWindow,
    #[error("dimension mismatch: window stores {expected}-dimensional samples, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("entry inserted_at {got} is not greater than the last inserted_at {last}")]
    NonMonotonicInsert { got: u64, last: u64 },
    #[error("entry with inserted_at {inserted_at} is not in the window")]
    EntryNotFound { inserted_at: u64 },
}

/// FIFO memory of the most recent `capacity` stored samples.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    capacity: usize,
    entries: VecDeque<WindowEntry>,
    step: u64,
    dim: Option<usize>,
}

/// A window entry annotated for the decision rule: its distance to the query
/// and the two per-entry weights.
#[derive(Debug, Clone)]
pub struct WeightedNeighbor<'a> {
    pub entry: &'a WindowEntry,
    pub distance: f64,
    pub age_weight: f64,
    pub gt_weight: f64,
}

/// Label-origin weight of an entry under the given configuration.
pub fn origin_weight(origin: LabelOrigin, config: &LearnerConfig) -> f64 {
    if !config.use_gt_weight {
        return 1.0;
    }
    match origin {
        LabelOrigin::GroundTruth => config.gt_weight,
        LabelOrigin::SelfLabeled => config.sl_weight,
    }
}

impl SlidingWindow {
    /// Creates an empty window holding at most `capacity` entries.
    ///
    /// Panics if `capacity` is zero; configurations are validated upstream.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be ≥ 1");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
            step: 0,
            dim: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Value the next pushed entry will be stamped with.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Entries in insertion order (oldest first).
    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    /// Stamps `inserted_at` from the window's step counter and inserts.
    pub fn push(
        &mut self,
        sample: Sample,
        label: ClassLabel,
        origin: LabelOrigin,
    ) -> Result<(), WindowError> {
        let entry = WindowEntry {
            sample,
            label,
            origin,
            inserted_at: self.step,
        };
        self.insert(entry)
    }

    /// Appends an entry, evicting the oldest one iff the window is full.
    pub fn insert(&mut self, entry: WindowEntry) -> Result<(), WindowError> {
        if let Some(dim) = self.dim {
            if entry.sample.dim() != dim {
                return Err(WindowError::DimensionMismatch {
                    expected: dim,
                    got: entry.sample.dim(),
                });
            }
        } else {
            self.dim = Some(entry.sample.dim());
        }
        if let Some(last) = self.entries.back() {
            if entry.inserted_at <= last.inserted_at {
                return Err(WindowError::NonMonotonicInsert {
                    got: entry.inserted_at,
                    last: last.inserted_at,
                });
            }
        }
        self.step = entry.inserted_at + 1;
        self.entries.push_back(entry);
        if self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// Recency weight of `entry`: 1 for the newest entry, `age_weight_oldest`
    /// for the oldest, linear in rank position in between. A single-entry
    /// window maps to 1; with the weighting disabled every entry maps to 1.
    pub fn age_weight(
        &self,
        entry: &WindowEntry,
        config: &LearnerConfig,
    ) -> Result<f64, WindowError> {
        let rank = self
            .entries
            .iter()
            .position(|e| e.inserted_at == entry.inserted_at)
            .ok_or(WindowError::EntryNotFound {
                inserted_at: entry.inserted_at,
            })?;
        Ok(self.age_weight_at(rank, config))
    }

    fn age_weight_at(&self, rank: usize, config: &LearnerConfig) -> f64 {
        if !config.use_age_weight {
            return 1.0;
        }
        let m = self.entries.len();
        if m <= 1 {
            return 1.0;
        }
        let oldest = config.age_weight_oldest;
        oldest + (1.0 - oldest) * rank as f64 / (m - 1) as f64
    }

    /// The `min(k, len)` entries closest to `x` in Euclidean distance, each
    /// annotated with its distance and weights. Distance ties prefer the
    /// newer entry.
    pub fn neighbors<'a>(
        &'a self,
        x: &Sample,
        k: usize,
        config: &LearnerConfig,
    ) -> Result<Vec<WeightedNeighbor<'a>>, WindowError> {
        if self.entries.is_empty() {
            return Err(WindowError::EmptyWindow);
        }
        if let Some(dim) = self.dim {
            if x.dim() != dim {
                return Err(WindowError::DimensionMismatch {
                    expected: dim,
                    got: x.dim(),
                });
            }
        }
        let mut ranked: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(rank, e)| (rank, e.sample.distance(x)))
            .collect();
        ranked.sort_by(|(ra, da), (rb, db)| {
            da.total_cmp(db)
                .then_with(|| self.entries[*rb].inserted_at.cmp(&self.entries[*ra].inserted_at))
        });
        ranked.truncate(k.min(self.entries.len()));
        Ok(ranked
            .into_iter()
            .map(|(rank, distance)| WeightedNeighbor {
                entry: &self.entries[rank],
                distance,
                age_weight: self.age_weight_at(rank, config),
                gt_weight: origin_weight(self.entries[rank].origin, config),
            })
            .collect())
    }

    /// Normalizing factors for the certainty: the means of the k largest age
    /// weights and the k largest origin weights over all current entries
    /// (over all entries when fewer than k are stored).
    pub fn normalizers(&self, k: usize, config: &LearnerConfig) -> Result<(f64, f64), WindowError> {
        if self.entries.is_empty() {
            return Err(WindowError::EmptyWindow);
        }
        let m = self.entries.len();
        let take = k.min(m);
        let mut age: Vec<f64> = (0..m).map(|rank| self.age_weight_at(rank, config)).collect();
        let mut gt: Vec<f64> = self
            .entries
            .iter()
            .map(|e| origin_weight(e.origin, config))
            .collect();
        age.sort_by(|a, b| b.total_cmp(a));
        gt.sort_by(|a, b| b.total_cmp(a));
        let omega_age = age[..take].iter().sum::<f64>() / take as f64;
        let omega_gt = gt[..take].iter().sum::<f64>() / take as f64;
        Ok((omega_age, omega_gt))
    }

    /// Applies the weighted k-NN decision rule and the certainty estimate.
    pub fn predict(&self, x: &Sample, config: &LearnerConfig) -> Result<Prediction, WindowError> {
        let neighbors = self.neighbors(x, config.k, config)?;
        let label = weighted_vote(&neighbors).expect("neighbors are non-empty");
        let winning_mass: f64 = neighbors
            .iter()
            .filter(|n| n.entry.label == label)
            .map(|n| n.gt_weight * n.age_weight / n.distance.max(MIN_DISTANCE))
            .sum();
        let inverse_mass: f64 = neighbors
            .iter()
            .map(|n| 1.0 / n.distance.max(MIN_DISTANCE))
            .sum();
        let (omega_age, omega_gt) = self.normalizers(config.k, config)?;
        let certainty = (winning_mass / (omega_gt * omega_age * inverse_mass)).clamp(0.0, 1.0);
        Ok(Prediction { label, certainty })
    }
}

/// Argmax of the weighted inverse-distance vote; ties break toward the
/// smallest class id. Returns `None` for an empty neighbor list.
pub fn weighted_vote(neighbors: &[WeightedNeighbor<'_>]) -> Option<ClassLabel> {
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for n in neighbors {
        *scores.entry(n.entry.label.0).or_insert(0.0) +=
            n.gt_weight * n.age_weight / n.distance.max(MIN_DISTANCE);
    }
    let mut best: Option<(u32, f64)> = None;
    for (&id, &score) in &scores {
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((id, score)),
        }
    }
    best.map(|(id, _)| ClassLabel(id))
}
