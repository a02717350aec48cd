use std::collections::BTreeMap;

use edlab_core::hydro::EnergyReport;
use edlab_core::SpatialGrid;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One value per representation of the dynamics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerRepresentation<T> {
    /// Coupled `(rho, phi)` field solver.
    pub fields: Option<T>,
    /// Crank–Nicolson `|psi|^2`.
    pub schrodinger: Option<T>,
    /// Chapman–Kolmogorov kernel iteration.
    pub ck: Option<T>,
    /// Walker histogram.
    pub ensemble: Option<T>,
}

impl<T> PerRepresentation<T> {
    pub fn named(&self) -> [(&'static str, Option<&T>); 4] {
        [
            ("fields", self.fields.as_ref()),
            ("schrodinger", self.schrodinger.as_ref()),
            ("ck", self.ck.as_ref()),
            ("ensemble", self.ensemble.as_ref()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub l1: f64,
    pub l2: f64,
}

impl Distance {
    pub fn between(grid: &SpatialGrid, a: &[f64], b: &[f64]) -> Self {
        let (mut l1, mut l2) = (0.0, 0.0);
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            let w = grid.weight(i);
            let d = (x - y).abs();
            l1 += w * d;
            l2 += w * d * d;
        }
        Self { l1, l2: l2.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotReport {
    pub step: usize,
    pub t: f64,
    pub density: PerRepresentation<Vec<f64>>,
    pub mean: PerRepresentation<f64>,
    pub variance: PerRepresentation<f64>,
    /// Closed-form variance, when one exists.
    pub analytic_variance: Option<f64>,
    /// Pairwise distances keyed `a_vs_b`.
    pub distances: BTreeMap<String, Distance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub kinetic_current: f64,
    pub kinetic_osmotic: f64,
    pub potential: f64,
    pub total: f64,
}

impl EnergySample {
    pub fn new(t: f64, e: &EnergyReport) -> Self {
        Self {
            t,
            kinetic_current: e.kinetic_current,
            kinetic_osmotic: e.kinetic_osmotic,
            potential: e.potential,
            total: e.total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: Option<f64>,
    pub limit: f64,
    pub direction: Direction,
    pub pass: bool,
}

impl Metric {
    pub fn check(value: f64, limit: f64, direction: Direction) -> Self {
        let pass = value.is_finite()
            && match direction {
                Direction::AtMost => value <= limit,
                Direction::AtLeast => value >= limit,
            };
        Self { value: value.is_finite().then_some(value), limit, direction, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub version: String,
    pub seed: u64,
    /// Node coordinates shared by every density column.
    pub x: Vec<f64>,
    pub snapshots: Vec<SnapshotReport>,
    pub energy: Vec<EnergySample>,
    /// Measured quantities without a pass/fail role.
    pub observations: BTreeMap<String, f64>,
    /// Checked quantities, one per configured tolerance.
    pub metrics: BTreeMap<String, Metric>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn empty(scenario: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            version: VERSION.to_string(),
            seed,
            x: Vec::new(),
            snapshots: Vec::new(),
            energy: Vec::new(),
            observations: BTreeMap::new(),
            metrics: BTreeMap::new(),
            pass: true,
        }
    }

    /// Records a check if `limit` is configured.
    pub fn check(&mut self, name: &str, value: f64, limit: Option<f64>, direction: Direction) {
        if let Some(limit) = limit {
            let m = Metric::check(value, limit, direction);
            self.pass &= m.pass;
            self.metrics.insert(name.to_string(), m);
        } else {
            self.observe(name, value);
        }
    }

    pub fn observe(&mut self, name: &str, value: f64) {
        self.observations.insert(name.to_string(), value);
    }

    pub fn metric_value(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).and_then(|m| m.value).or_else(|| self.observations.get(name).copied())
    }

    /// Largest distance of the given kind over all snapshots.
    pub fn max_distance(&self, pair: &str, pick: impl Fn(&Distance) -> f64) -> Option<f64> {
        self.snapshots.iter().filter_map(|s| s.distances.get(pair).map(&pick)).reduce(f64::max)
    }
}
