//! Coordinate conventions and the core value types.
//!
//! Everything is expressed in a scenario-local Cartesian frame: `x` east,
//! `y` north, `z` up, all in meters. Times are seconds on a shared epoch.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amplitude of a full-scale digital sample, in dB SPL.
pub const FULL_SCALE_DBSPL: f64 = 93.0;

/// Largest amplitude an observation may carry: full scale plus the √2 headroom.
pub fn max_amplitude_dbspl() -> f64 {
    FULL_SCALE_DBSPL + 20.0 * std::f64::consts::SQRT_2.log10()
}

/// Suffix appended to the ids of sensors mirrored through a plane.
pub const MIRROR_SUFFIX: &str = "#mirror";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3}, {:.3})", self.x, self.y, self.z)
    }
}

/// One sensor's report of a single pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorObservation {
    pub sensor_id: String,
    pub position: Position,
    /// Seconds on the shared epoch.
    pub arrival_time: f64,
    pub amplitude_dbspl: Option<f64>,
    pub snr_db: Option<f64>,
}

impl SensorObservation {
    pub fn new(sensor_id: impl Into<String>, position: Position, arrival_time: f64) -> Self {
        Self {
            sensor_id: sensor_id.into(),
            position,
            arrival_time,
            amplitude_dbspl: None,
            snr_db: None,
        }
    }

    pub fn with_amplitude(mut self, amplitude_dbspl: f64) -> Self {
        self.amplitude_dbspl = Some(amplitude_dbspl);
        self
    }

    pub fn with_snr(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sensor {}: non-finite position",
                self.sensor_id
            )));
        }
        if !self.arrival_time.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sensor {}: non-finite arrival time",
                self.sensor_id
            )));
        }
        if let Some(a) = self.amplitude_dbspl {
            if !(a <= max_amplitude_dbspl()) {
                return Err(Error::InvalidInput(format!(
                    "sensor {}: amplitude {a} dB SPL exceeds full-scale bound",
                    self.sensor_id
                )));
            }
        }
        Ok(())
    }
}

/// Observations attributed to one shot, kept in canonical order
/// (ascending arrival time, ties broken by sensor id).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseSet {
    shot_id: String,
    observations: Vec<SensorObservation>,
}

impl PulseSet {
    pub fn new(shot_id: impl Into<String>, mut observations: Vec<SensorObservation>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(observations.len());
        for obs in &observations {
            obs.validate()?;
            if !seen.insert(obs.sensor_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate sensor id {}", obs.sensor_id)));
            }
        }
        observations.sort_by(|a, b| {
            a.arrival_time
                .total_cmp(&b.arrival_time)
                .then_with(|| a.sensor_id.cmp(&b.sensor_id))
        });
        Ok(Self {
            shot_id: shot_id.into(),
            observations,
        })
    }

    pub fn shot_id(&self) -> &str {
        &self.shot_id
    }

    pub fn observations(&self) -> &[SensorObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Earliest arrival time, if any.
    pub fn first_arrival(&self) -> Option<f64> {
        self.observations.first().map(|o| o.arrival_time)
    }

    /// Loudest reported amplitude, ignoring observations without one.
    pub fn max_amplitude_dbspl(&self) -> Option<f64> {
        self.observations
            .iter()
            .filter_map(|o| o.amplitude_dbspl)
            .reduce(f64::max)
    }

    pub fn into_observations(self) -> Vec<SensorObservation> {
        self.observations
    }

    /// Rebuilds the set with each observation transformed; the result is re-canonicalised.
    pub fn map_observations<F>(&self, mut f: F) -> Result<PulseSet>
    where
        F: FnMut(&SensorObservation) -> SensorObservation,
    {
        PulseSet::new(self.shot_id.clone(), self.observations.iter().map(&mut f).collect())
    }
}

/// Constraint on the dimensionality of the solved source position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometricConstraint {
    /// Sensors projected onto `z = 0`; horizontal distances.
    TwoD,
    /// Full 3D solve on an array doubled by reflection through `z = z_star`.
    TwoPointFiveD {
        z_star: f64,
    },
    ThreeD,
}

impl GeometricConstraint {
    /// Number of free spatial coordinates in the solved position.
    pub fn dimension(&self) -> usize {
        match self {
            GeometricConstraint::TwoD | GeometricConstraint::TwoPointFiveD { .. } => 2,
            GeometricConstraint::ThreeD => 3,
        }
    }

    /// Source-to-sensor distance under this constraint's propagation model.
    pub fn distance(&self, source: &Position, sensor: &Position) -> f64 {
        match self {
            GeometricConstraint::TwoD => source.horizontal_distance(sensor),
            _ => source.distance(sensor),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let GeometricConstraint::TwoPointFiveD { z_star } = self {
            if !z_star.is_finite() {
                return Err(Error::InvalidInput("z_star must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self {
            GeometricConstraint::TwoD => "2D",
            GeometricConstraint::TwoPointFiveD { .. } => "2.5D",
            GeometricConstraint::ThreeD => "3D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverKind {
    Reddi,
    #[serde(rename = "MLG")]
    Mlg,
    LeastSquares,
    #[serde(rename = "IDT")]
    Idt,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::Reddi,
        SolverKind::Mlg,
        SolverKind::LeastSquares,
        SolverKind::Idt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Reddi => "Reddi",
            SolverKind::Mlg => "MLG",
            SolverKind::LeastSquares => "LeastSquares",
            SolverKind::Idt => "IDT",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reddi" => Ok(SolverKind::Reddi),
            "mlg" => Ok(SolverKind::Mlg),
            "leastsquares" | "least_squares" | "least-squares" | "ls" => Ok(SolverKind::LeastSquares),
            "idt" => Ok(SolverKind::Idt),
            other => Err(Error::InvalidInput(format!("unknown algorithm {other}"))),
        }
    }
}

/// Solver-specific extras that do not belong in the core solution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// MLG error term `v`, in m².
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_term: Option<f64>,
    /// Elevation returned by the 3D solve before the plane constraint was applied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unconstrained_z: Option<f64>,
    /// Outer iterations (IDT only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Set when an IDT range bound clamped the discharge time.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub range_bound_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSolution {
    pub position: Position,
    pub discharge_time: f64,
    /// Per-sensor `t_i - t_* - dist_i / c`, in seconds.
    pub residuals: BTreeMap<String, f64>,
    pub solver: SolverKind,
    pub constraint: GeometricConstraint,
    pub rms_residual: f64,
    pub condition_estimate: f64,
    pub diagnostics: Diagnostics,
}

/// Root mean square of a residual map; zero for an empty map.
pub fn rms(residuals: &BTreeMap<String, f64>) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let ss: f64 = residuals.values().map(|r| r * r).sum();
    (ss / residuals.len() as f64).sqrt()
}

/// Sets every observation's elevation to zero.
pub fn project_to_plane(set: &PulseSet) -> PulseSet {
    PulseSet {
        shot_id: set.shot_id.clone(),
        observations: set
            .observations
            .iter()
            .map(|o| SensorObservation {
                position: Position { z: 0.0, ..o.position },
                ..o.clone()
            })
            .collect(),
    }
}

/// Doubles the array: every observation plus its mirror image through the
/// horizontal plane `z = z_star`, with identical arrival time.
pub fn reflect_through_plane(set: &PulseSet, z_star: f64) -> Result<PulseSet> {
    if set.is_empty() {
        return Err(Error::Precondition("cannot reflect an empty pulse set".into()));
    }
    let mut observations = Vec::with_capacity(set.len() * 2);
    for o in &set.observations {
        observations.push(o.clone());
        observations.push(SensorObservation {
            sensor_id: format!("{}{}", o.sensor_id, MIRROR_SUFFIX),
            position: Position {
                z: 2.0 * z_star - o.position.z,
                ..o.position
            },
            ..o.clone()
        });
    }
    PulseSet::new(set.shot_id.clone(), observations)
}
