//! Synthetic gradually drifting streams: each class mean follows a
//! piecewise-linear trajectory through feature space while samples scatter
//! around it with isotropic Gaussian noise. Four default geometries cover
//! the drift behaviors of interest, from well-separated parallel motion to
//! classes that trade places through a shared region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, StreamError};
use crate::types::{ClassLabel, LabeledSample, Sample};

/// The four drift geometries of the synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Classes drift in parallel, far apart at all times.
    NoOverlap,
    /// Classes drift in parallel with overlapping tails but separable modes.
    PartlyOverlapping,
    /// Classes sweep through the same region of space at different times.
    CrossingDifferentTimes,
    /// Classes cross through the same point at the same time.
    CrossingSameTime,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::NoOverlap => "no_overlap",
            Scenario::PartlyOverlapping => "partly_overlapping",
            Scenario::CrossingDifferentTimes => "crossing_different_times",
            Scenario::CrossingSameTime => "crossing_same_time",
        }
    }

    pub fn all() -> [Scenario; 4] {
        [
            Scenario::NoOverlap,
            Scenario::PartlyOverlapping,
            Scenario::CrossingDifferentTimes,
            Scenario::CrossingSameTime,
        ]
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_overlap" => Ok(Scenario::NoOverlap),
            "partly_overlapping" => Ok(Scenario::PartlyOverlapping),
            "crossing_different_times" => Ok(Scenario::CrossingDifferentTimes),
            "crossing_same_time" => Ok(Scenario::CrossingSameTime),
            other => Err(format!(
                "unknown scenario '{other}' (expected one of: no_overlap, partly_overlapping, crossing_different_times, crossing_same_time)"
            )),
        }
    }
}

/// A class-mean path: waypoints `(u, position)` over normalized time
/// `u in [0, 1]`, linearly interpolated between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<(f64, Vec<f64>)>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(f64, Vec<f64>)>) -> Result<Self, StreamError> {
        if waypoints.len() < 2 {
            return Err(StreamError::InvalidSpec(
                "trajectory needs at least two waypoints".into(),
            ));
        }
        let dim = waypoints[0].1.len();
        if dim == 0 {
            return Err(StreamError::InvalidSpec("waypoints must be non-empty vectors".into()));
        }
        if waypoints.iter().any(|(_, p)| p.len() != dim) {
            return Err(StreamError::InvalidSpec(
                "all waypoints must share one dimension".into(),
            ));
        }
        if waypoints.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(StreamError::InvalidSpec(
                "waypoint times must be strictly increasing".into(),
            ));
        }
        if waypoints.first().unwrap().0 != 0.0 || waypoints.last().unwrap().0 != 1.0 {
            return Err(StreamError::InvalidSpec(
                "trajectories must start at u=0 and end at u=1".into(),
            ));
        }
        Ok(Self { waypoints })
    }

    pub fn dim(&self) -> usize {
        self.waypoints[0].1.len()
    }

    /// Mean position at normalized time `u` (clamped to `[0, 1]`).
    pub fn position(&self, u: f64) -> Vec<f64> {
        let u = u.clamp(0.0, 1.0);
        let segment = self
            .waypoints
            .windows(2)
            .find(|w| u <= w[1].0)
            .expect("u=1 is covered by the last segment");
        let (u0, ref p0) = segment[0];
        let (u1, ref p1) = segment[1];
        let s = (u - u0) / (u1 - u0);
        p0.iter().zip(p1).map(|(a, b)| a + s * (b - a)).collect()
    }
}

/// Generator spec: scenario geometry, stream length, dimension, noise level,
/// per-class mean trajectories, and the seed that fixes every draw.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub class_trajectories: Vec<Trajectory>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            n: 2000,
            d: 2,
            sigma: 0.5,
            class_trajectories: default_trajectories(scenario),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.n == 0 {
            return Err(StreamError::InvalidSpec("n must be ≥ 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(StreamError::InvalidSpec("sigma must be > 0".into()));
        }
        if self.class_trajectories.len() < 2 {
            return Err(StreamError::InvalidSpec("at least two classes are required".into()));
        }
        if self.class_trajectories.iter().any(|t| t.dim() != self.d) {
            return Err(StreamError::InvalidSpec(format!(
                "trajectory dimension must equal d={}",
                self.d
            )));
        }
        Ok(())
    }
}

/// The calibrated default geometries (2-D, sigma 0.5).
///
/// - no_overlap: parallel tracks 5 units apart.
/// - partly_overlapping: parallel tracks 2 units apart; tails mix, modes don't.
/// - crossing_different_times: class 0 walks a corridor along the x-axis
///   through (5, 0) at u=0.35 and leaves it upward at u~0.55; class 1 sweeps
///   the same corridor right-to-left shortly afterwards, reaching (5, 0) at
///   u=0.65. The regions coincide, the occupancy times do not.
/// - crossing_same_time: straight diagonal tracks meeting at (5, 2.5) at
///   u=0.5.
pub fn default_trajectories(scenario: Scenario) -> Vec<Trajectory> {
    let wp = |points: &[(f64, [f64; 2])]| {
        Trajectory::new(points.iter().map(|(u, p)| (*u, p.to_vec())).collect())
            .expect("default trajectories are valid")
    };
    match scenario {
        Scenario::NoOverlap => vec![
            wp(&[(0.0, [0.0, 0.0]), (1.0, [10.0, 0.0])]),
            wp(&[(0.0, [0.0, 5.0]), (1.0, [10.0, 5.0])]),
        ],
        Scenario::PartlyOverlapping => vec![
            wp(&[(0.0, [0.0, 0.0]), (1.0, [10.0, 0.0])]),
            wp(&[(0.0, [0.0, 2.0]), (1.0, [10.0, 2.0])]),
        ],
        Scenario::CrossingDifferentTimes => vec![
            wp(&[
                (0.0, [0.0, 0.0]),
                (0.2, [3.5, 0.0]),
                (0.35, [5.0, 0.0]),
                (0.55, [6.5, 0.0]),
                (0.62, [6.5, 5.0]),
                (1.0, [10.0, 5.0]),
            ]),
            wp(&[
                (0.0, [13.0, 0.0]),
                (0.57, [8.0, 0.0]),
                (0.65, [5.0, 0.0]),
                (1.0, [0.0, 0.0]),
            ]),
        ],
        Scenario::CrossingSameTime => vec![
            wp(&[(0.0, [0.0, 0.0]), (1.0, [10.0, 5.0])]),
            wp(&[(0.0, [0.0, 5.0]), (1.0, [10.0, 0.0])]),
        ],
    }
}

/// Draws the stream: at step `t` (u = t/n) the class is uniform over the
/// classes and the features are the class trajectory position plus
/// `N(0, sigma^2 I)` noise. Fully determined by the spec and its seed.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset, StreamError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_classes = spec.class_trajectories.len();
    let mut samples = Vec::with_capacity(spec.n);
    for t in 0..spec.n {
        let u = t as f64 / spec.n as f64;
        let class = rng.random_range(0..n_classes);
        let mean = spec.class_trajectories[class].position(u);
        let features: Vec<f64> = mean
            .iter()
            .map(|m| m + spec.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        samples.push(LabeledSample {
            sample: Sample::new(features, t as u64).expect("generator emits finite features"),
            label: ClassLabel(class as u32),
        });
    }
    Ok(Dataset {
        samples,
        n_classes: n_classes as u32,
        dim: spec.d,
        name: spec.scenario.name().to_string(),
    })
}
