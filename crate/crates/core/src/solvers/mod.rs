//! Time-of-arrival multilateration.
//!
//! Four algorithms solve the same straight-line, still-air propagation model:
//! `t_i = t_* + |p_i - p| / c`. All of them work on a centred copy of the
//! sensor array with times measured from the first arrival; this keeps the
//! squared terms in the linearised systems at a sane magnitude regardless of
//! the frame origin or the time epoch.

mod idt;
mod least_squares;
mod mlg;
mod reddi;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{
    project_to_plane, reflect_through_plane, rms, Diagnostics, GeometricConstraint, Position, PulseSet, ShotSolution,
    SolverKind,
};

pub use idt::solve_idt;
pub use least_squares::solve_least_squares;
pub use mlg::solve_mlg;
pub use reddi::solve_reddi;

/// Accepted speed-of-sound range, m/s.
pub const SPEED_OF_SOUND_RANGE: (f64, f64) = (300.0, 360.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub algorithm: SolverKind,
    pub constraint: GeometricConstraint,
    /// m/s
    pub speed_of_sound: f64,
    /// IDT starts its search at `t_0 - idt_initial_offset`, seconds.
    pub idt_initial_offset: f64,
    /// Optional (min, max) range from the first reporting sensor, meters (IDT only).
    pub idt_range_bounds: Option<(f64, f64)>,
    /// Meters; IDT stops when its discharge-time step is below `convergence_tol / c`.
    pub convergence_tol: f64,
    /// IDT outer iterations.
    pub max_iterations: usize,
    /// Singular values below `svd_cutoff · σ_max` are treated as zero.
    pub svd_cutoff: f64,
    /// Condition estimates above this are reported as degenerate geometry.
    pub max_condition: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: SolverKind::Mlg,
            constraint: GeometricConstraint::TwoD,
            speed_of_sound: 343.0,
            idt_initial_offset: 1.0,
            idt_range_bounds: None,
            convergence_tol: 1e-4,
            max_iterations: 200,
            svd_cutoff: 1e-10,
            max_condition: 1e8,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: SolverKind, constraint: GeometricConstraint, speed_of_sound: f64) -> Self {
        Self {
            algorithm,
            constraint,
            speed_of_sound,
            ..Self::default()
        }
    }

    pub fn with_algorithm(&self, algorithm: SolverKind) -> Self {
        Self {
            algorithm,
            ..self.clone()
        }
    }

    pub fn with_constraint(&self, constraint: GeometricConstraint) -> Self {
        Self {
            constraint,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = SPEED_OF_SOUND_RANGE;
        if !(self.speed_of_sound > lo && self.speed_of_sound < hi) {
            return Err(Error::InvalidInput(format!(
                "speed of sound {} m/s outside ({lo}, {hi})",
                self.speed_of_sound
            )));
        }
        if !(self.convergence_tol > 0.0) || !(self.svd_cutoff > 0.0) || !(self.max_condition > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.idt_initial_offset > 0.0) {
            return Err(Error::InvalidInput("IDT initial offset must be positive".into()));
        }
        if let Some((min, max)) = self.idt_range_bounds {
            if !(min >= 0.0 && max > min) {
                return Err(Error::InvalidInput(format!("invalid IDT range bounds ({min}, {max})")));
            }
        }
        self.constraint.validate()
    }
}

/// Minimum observation count the dispatcher accepts: `d + 2`.
pub fn min_sensors(constraint: &GeometricConstraint) -> usize {
    constraint.dimension() + 2
}

/// Locates the source with the configured algorithm.
///
/// Requires at least `d + 2` observations so the solution is unique.
pub fn solve(set: &PulseSet, cfg: &SolverConfig) -> Result<ShotSolution> {
    let needed = min_sensors(&cfg.constraint);
    if set.len() < needed {
        return Err(Error::InsufficientSensors { needed, got: set.len() });
    }
    match cfg.algorithm {
        SolverKind::Reddi => solve_reddi(set, cfg),
        SolverKind::Mlg => solve_mlg(set, cfg),
        SolverKind::LeastSquares => solve_least_squares(set, cfg),
        SolverKind::Idt => solve_idt(set, cfg),
    }
}

/// Arrival time predicted by the straight-line model.
pub fn predict_arrival(
    source: &Position,
    discharge_time: f64,
    sensor: &Position,
    speed_of_sound: f64,
    constraint: &GeometricConstraint,
) -> f64 {
    discharge_time + constraint.distance(source, sensor) / speed_of_sound
}

/// Per-sensor residuals `t_i - t_* - dist_i / c` of a candidate solution.
pub fn residuals_for(
    set: &PulseSet,
    position: &Position,
    discharge_time: f64,
    speed_of_sound: f64,
    constraint: &GeometricConstraint,
) -> BTreeMap<String, f64> {
    set.observations()
        .iter()
        .map(|o| {
            let predicted = predict_arrival(position, discharge_time, &o.position, speed_of_sound, constraint);
            (o.sensor_id.clone(), o.arrival_time - predicted)
        })
        .collect()
}

/// The array a solver actually sees: constraint applied, centred, and with
/// times relative to the first arrival.
#[derive(Debug, Clone)]
pub(crate) struct Working {
    /// Spatial dimension of the solve (2 or 3).
    pub dim: usize,
    /// Sensor coordinates minus `origin`; only the first `dim` entries are used.
    pub points: Vec<[f64; 3]>,
    /// Arrival times minus `t0`, canonical order.
    pub times: Vec<f64>,
    pub origin: [f64; 3],
    pub t0: f64,
    pub c: f64,
}

impl Working {
    fn new(set: &PulseSet, dim: usize, c: f64) -> Self {
        let n = set.len() as f64;
        let mut origin = [0.0; 3];
        for o in set.observations() {
            origin[0] += o.position.x / n;
            origin[1] += o.position.y / n;
            if dim == 3 {
                origin[2] += o.position.z / n;
            }
        }
        let t0 = set.first_arrival().unwrap_or(0.0);
        let points = set
            .observations()
            .iter()
            .map(|o| {
                let z = if dim == 3 { o.position.z - origin[2] } else { 0.0 };
                [o.position.x - origin[0], o.position.y - origin[1], z]
            })
            .collect();
        let times = set.observations().iter().map(|o| o.arrival_time - t0).collect();
        Self {
            dim,
            points,
            times,
            origin,
            t0,
            c,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn distance(&self, i: usize, p: &[f64; 3]) -> f64 {
        let q = &self.points[i];
        (0..self.dim).map(|k| (q[k] - p[k]).powi(2)).sum::<f64>().sqrt()
    }

    /// RMS of `τ_i - τ_* - |p_i - p| / c` over the working array.
    pub fn rms_residual(&self, p: &[f64; 3], tau_star: f64) -> f64 {
        let ss: f64 = (0..self.len())
            .map(|i| {
                let r = self.times[i] - tau_star - self.distance(i, p) / self.c;
                r * r
            })
            .sum();
        (ss / self.len() as f64).sqrt()
    }

    pub fn squared_norm(&self, i: usize) -> f64 {
        self.points[i][..self.dim].iter().map(|v| v * v).sum()
    }
}

/// Output of an algorithm in working coordinates.
#[derive(Debug, Clone)]
pub(crate) struct RawSolution {
    pub point: [f64; 3],
    /// Discharge time relative to `t0`.
    pub tau_star: f64,
    pub condition: f64,
    pub diagnostics: Diagnostics,
}

/// Applies the constraint, checks the count, and builds the working array.
pub(crate) fn prepare(set: &PulseSet, cfg: &SolverConfig, min_count: usize) -> Result<Working> {
    cfg.validate()?;
    if set.len() < min_count {
        return Err(Error::InsufficientSensors {
            needed: min_count,
            got: set.len(),
        });
    }
    let c = cfg.speed_of_sound;
    Ok(match cfg.constraint {
        GeometricConstraint::TwoD => Working::new(&project_to_plane(set), 2, c),
        GeometricConstraint::ThreeD => Working::new(set, 3, c),
        GeometricConstraint::TwoPointFiveD { z_star } => Working::new(&reflect_through_plane(set, z_star)?, 3, c),
    })
}

/// Maps a working-frame solution back and evaluates residuals on the original observations.
pub(crate) fn finish(set: &PulseSet, cfg: &SolverConfig, w: &Working, raw: RawSolution) -> ShotSolution {
    let solved_z = raw.point[2] + w.origin[2];
    let mut diagnostics = raw.diagnostics;
    let z = match cfg.constraint {
        GeometricConstraint::TwoD => 0.0,
        GeometricConstraint::TwoPointFiveD { z_star } => {
            diagnostics.unconstrained_z = Some(solved_z);
            z_star
        }
        GeometricConstraint::ThreeD => solved_z,
    };
    let position = Position::new(raw.point[0] + w.origin[0], raw.point[1] + w.origin[1], z);
    let discharge_time = w.t0 + raw.tau_star;
    let residuals = residuals_for(set, &position, discharge_time, cfg.speed_of_sound, &cfg.constraint);
    ShotSolution {
        position,
        discharge_time,
        rms_residual: rms(&residuals),
        residuals,
        solver: cfg.algorithm,
        constraint: cfg.constraint,
        condition_estimate: raw.condition,
        diagnostics,
    }
}

/// Least-squares solve through a truncated SVD.
#[derive(Debug, Clone)]
pub(crate) struct LinearSolve {
    pub x: DVector<f64>,
    pub rank: usize,
    pub condition: f64,
}

pub(crate) fn lstsq(a: DMatrix<f64>, b: &DVector<f64>, cutoff: f64) -> Result<LinearSolve> {
    let ncols = a.ncols();
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = if s.len() < ncols { 0.0 } else { s.min() };
    let tol = cutoff * smax;
    let rank = s.iter().filter(|&&v| v > tol).count();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let x = svd.solve(b, tol).map_err(|_| Error::DegenerateGeometry {
        condition: f64::INFINITY,
    })?;
    Ok(LinearSolve { x, rank, condition })
}

/// Rejects rank-deficient or badly conditioned systems.
pub(crate) fn check_conditioning(sol: &LinearSolve, unknowns: usize, cfg: &SolverConfig) -> Result<()> {
    if sol.rank < unknowns || !(sol.condition <= cfg.max_condition) {
        return Err(Error::DegenerateGeometry {
            condition: sol.condition,
        });
    }
    Ok(())
}

/// Consecutive-pair difference rows shared by LeastSquares and IDT.
///
/// Subtracting the range equation of sensor `i` from that of `i + 1` leaves
/// `Δp · p + d_i (c t_*) = e_i` with `d_i = -c Δt` and
/// `e_i = ½(|p_{i+1}|² - |p_i|² - c² t_{i+1}² + c² t_i²)`.
pub(crate) struct DifferenceRows {
    /// `[Δx, Δy, Δz]` per pair (only `dim` entries used).
    pub spatial: Vec<[f64; 3]>,
    pub time: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl DifferenceRows {
    pub fn new(w: &Working) -> Self {
        let c = w.c;
        let n = w.len();
        let mut spatial = Vec::with_capacity(n.saturating_sub(1));
        let mut time = Vec::with_capacity(n.saturating_sub(1));
        let mut rhs = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n.saturating_sub(1) {
            let (p, q) = (&w.points[i], &w.points[i + 1]);
            let (ti, tj) = (w.times[i], w.times[i + 1]);
            spatial.push([q[0] - p[0], q[1] - p[1], q[2] - p[2]]);
            time.push(-c * (tj - ti));
            rhs.push(0.5 * (w.squared_norm(i + 1) - w.squared_norm(i) + c * c * (ti * ti - tj * tj)));
        }
        Self { spatial, time, rhs }
    }
}
