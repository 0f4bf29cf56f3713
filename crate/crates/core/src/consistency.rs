//! Mutual-consistency pulse selection.
//!
//! A candidate pool holds every impulse detected on every sensor around one
//! event, echoes and unrelated noise included. Selection looks for the
//! largest subset, at most one pulse per sensor, whose arrival times all fit a
//! single straight-line source within the residual tolerance.
//!
//! Small pools are searched exhaustively. Larger pools use sample consensus:
//! minimal subsets are drawn from a seeded ChaCha8 stream (one stream per
//! trial), solved, and scored by the size of the filtered set. Either way the
//! winner is refined by solve, filter, re-solve until membership stops
//! changing.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Position, PulseSet, SensorObservation, ShotSolution};
use crate::solvers::{min_sensors, solve, SolverConfig};

pub use crate::solvers::predict_arrival;

/// Default cap on pulses per sensor in one pool.
pub const DEFAULT_MAX_PER_SENSOR: usize = 8;
/// Longest admissible pool window, seconds.
pub const MAX_WINDOW: f64 = 10.0;
/// Published bound on the model residual of a consistent pulse, seconds.
pub const DEFAULT_TOLERANCE: f64 = 0.040;
/// Upper bound on refinement rounds.
pub const MAX_REFINE_ROUNDS: usize = 10;

/// One detected pulse in a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sensor_id: String,
    pub position: Position,
    pub arrival_time: f64,
    /// Detection score; informational.
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_dbspl: Option<f64>,
}

impl Candidate {
    pub fn new(sensor_id: impl Into<String>, position: Position, arrival_time: f64, score: f64) -> Self {
        Self {
            sensor_id: sensor_id.into(),
            position,
            arrival_time,
            score,
            amplitude_dbspl: None,
        }
    }

    pub fn with_amplitude(mut self, amplitude_dbspl: f64) -> Self {
        self.amplitude_dbspl = Some(amplitude_dbspl);
        self
    }

    fn to_observation(&self) -> SensorObservation {
        SensorObservation {
            sensor_id: self.sensor_id.clone(),
            position: self.position,
            arrival_time: self.arrival_time,
            amplitude_dbspl: self.amplitude_dbspl,
            snr_db: None,
        }
    }

    fn same_pulse(&self, obs: &SensorObservation) -> bool {
        self.sensor_id == obs.sensor_id && self.arrival_time == obs.arrival_time
    }
}

impl From<&SensorObservation> for Candidate {
    fn from(o: &SensorObservation) -> Self {
        Self {
            sensor_id: o.sensor_id.clone(),
            position: o.position,
            arrival_time: o.arrival_time,
            score: 0.0,
            amplitude_dbspl: o.amplitude_dbspl,
        }
    }
}

/// Pulses from many sensors within one time window, sorted by (time, sensor).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidatePool {
    id: String,
    pulses: Vec<Candidate>,
    window: (f64, f64),
}

impl CandidatePool {
    /// Validates the window, the per-sensor cap and that every pulse lies in the window.
    pub fn new(
        id: impl Into<String>,
        mut pulses: Vec<Candidate>,
        window: (f64, f64),
        max_per_sensor: usize,
    ) -> Result<Self> {
        let (lo, hi) = window;
        if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
            return Err(Error::InvalidInput(format!("invalid pool window ({lo}, {hi})")));
        }
        if hi - lo > MAX_WINDOW {
            return Err(Error::InvalidInput(format!(
                "pool window {:.3} s exceeds {MAX_WINDOW} s",
                hi - lo
            )));
        }
        let mut per_sensor: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &pulses {
            if !(p.arrival_time >= lo && p.arrival_time <= hi) {
                return Err(Error::InvalidInput(format!(
                    "pulse at {} on {} outside window",
                    p.arrival_time, p.sensor_id
                )));
            }
            if !p.position.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "sensor {}: non-finite position",
                    p.sensor_id
                )));
            }
            let count = per_sensor.entry(p.sensor_id.as_str()).or_default();
            *count += 1;
            if *count > max_per_sensor {
                return Err(Error::InvalidInput(format!(
                    "sensor {} has more than {max_per_sensor} pulses",
                    p.sensor_id
                )));
            }
        }
        pulses.sort_by(|a, b| {
            a.arrival_time
                .total_cmp(&b.arrival_time)
                .then_with(|| a.sensor_id.cmp(&b.sensor_id))
        });
        Ok(Self {
            id: id.into(),
            pulses,
            window,
        })
    }

    /// Pool whose window is the span of the pulses, with the default per-sensor cap.
    pub fn from_pulses(id: impl Into<String>, pulses: Vec<Candidate>) -> Result<Self> {
        let lo = pulses.iter().map(|p| p.arrival_time).fold(f64::INFINITY, f64::min);
        let hi = pulses.iter().map(|p| p.arrival_time).fold(f64::NEG_INFINITY, f64::max);
        let window = if pulses.is_empty() { (0.0, 0.0) } else { (lo, hi) };
        Self::new(id, pulses, window, DEFAULT_MAX_PER_SENSOR)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn pulses(&self) -> &[Candidate] {
        &self.pulses
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn sensor_count(&self) -> usize {
        self.pulses
            .iter()
            .map(|p| p.sensor_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// The pool minus every pulse that appears in `set`.
    pub fn without(&self, set: &PulseSet) -> CandidatePool {
        let pulses = self
            .pulses
            .iter()
            .filter(|p| !set.observations().iter().any(|o| p.same_pulse(o)))
            .cloned()
            .collect();
        Self {
            id: self.id.clone(),
            pulses,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyParams {
    /// Seconds.
    pub residual_tolerance: f64,
    /// Smallest acceptable set; `None` means `d + 2`. Never below `d + 2`.
    pub min_sensors: Option<usize>,
    /// Pools with at most this many pulses are searched exhaustively.
    pub max_exhaustive: usize,
    pub ransac_trials: usize,
    pub seed: u64,
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Self {
            residual_tolerance: DEFAULT_TOLERANCE,
            min_sensors: None,
            max_exhaustive: 12,
            ransac_trials: 500,
            seed: 0,
        }
    }
}

impl ConsistencyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::InvalidInput("residual tolerance must be positive".into()));
        }
        Ok(())
    }

    fn effective_min(&self, cfg: &SolverConfig) -> usize {
        let floor = min_sensors(&cfg.constraint);
        self.min_sensors.unwrap_or(floor).max(floor)
    }
}

/// Pulses within tolerance of the hypothesis, at most one per sensor (smallest
/// absolute residual wins, earlier pulse on a tie).
pub fn consistency_filter(
    pool: &CandidatePool,
    hypothesis: &ShotSolution,
    params: &ConsistencyParams,
    speed_of_sound: f64,
) -> Vec<Candidate> {
    let idx = filter_indices(pool, hypothesis, params.residual_tolerance, speed_of_sound);
    idx.into_iter().map(|i| pool.pulses[i].clone()).collect()
}

fn residual(c: &Candidate, hypothesis: &ShotSolution, speed_of_sound: f64) -> f64 {
    c.arrival_time
        - predict_arrival(
            &hypothesis.position,
            hypothesis.discharge_time,
            &c.position,
            speed_of_sound,
            &hypothesis.constraint,
        )
}

/// Sorted pool indices retained by the filter.
fn filter_indices(pool: &CandidatePool, hypothesis: &ShotSolution, tolerance: f64, c: f64) -> Vec<usize> {
    let mut best: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (i, p) in pool.pulses.iter().enumerate() {
        let r = residual(p, hypothesis, c).abs();
        if !(r <= tolerance) {
            continue;
        }
        best.entry(p.sensor_id.as_str())
            .and_modify(|e| {
                if r < e.0 {
                    *e = (r, i);
                }
            })
            .or_insert((r, i));
    }
    let mut idx: Vec<usize> = best.into_values().map(|(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

/// A pulse subset together with its own solution.
#[derive(Debug, Clone)]
struct Hypothesis {
    members: Vec<usize>,
    solution: ShotSolution,
}

impl Hypothesis {
    fn rank_key(&self) -> (std::cmp::Reverse<usize>, f64) {
        (std::cmp::Reverse(self.members.len()), self.solution.rms_residual)
    }
}

struct Search<'a> {
    pool: &'a CandidatePool,
    params: &'a ConsistencyParams,
    cfg: &'a SolverConfig,
    min: usize,
}

impl Search<'_> {
    fn pulse_set(&self, members: &[usize]) -> Result<PulseSet> {
        PulseSet::new(
            self.pool.id.clone(),
            members.iter().map(|&i| self.pool.pulses[i].to_observation()).collect(),
        )
    }

    fn solve(&self, members: &[usize]) -> Option<ShotSolution> {
        solve(&self.pulse_set(members).ok()?, self.cfg).ok()
    }

    /// Two pulses can only come from one source if their time difference is no
    /// larger than the travel time between their sensors plus both tolerances.
    fn compatible(&self, a: usize, b: usize) -> bool {
        let (p, q) = (&self.pool.pulses[a], &self.pool.pulses[b]);
        if p.sensor_id == q.sensor_id {
            return false;
        }
        let d = self.cfg.constraint.distance(&p.position, &q.position);
        (p.arrival_time - q.arrival_time).abs() <= d / self.cfg.speed_of_sound + 2.0 * self.params.residual_tolerance
    }

    /// Solution of `members` if every member lies within tolerance of it.
    fn consistent(&self, members: &[usize]) -> Option<ShotSolution> {
        let sol = self.solve(members)?;
        let tol = self.params.residual_tolerance;
        sol.residuals.values().all(|r| r.abs() <= tol).then_some(sol)
    }

    fn exhaustive(&self) -> Option<Hypothesis> {
        // Group pool indices by sensor, then enumerate one-or-none per sensor.
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, p) in self.pool.pulses.iter().enumerate() {
            groups.entry(p.sensor_id.as_str()).or_default().push(i);
        }
        let groups: Vec<Vec<usize>> = groups.into_values().collect();
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        let mut current = Vec::new();
        self.enumerate(&groups, 0, &mut current, &mut subsets);
        subsets.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));

        let mut start = 0;
        while start < subsets.len() {
            let size = subsets[start].len();
            let end = subsets[start..]
                .iter()
                .position(|s| s.len() != size)
                .map_or(subsets.len(), |k| start + k);
            let best = subsets[start..end]
                .par_iter()
                .filter_map(|m| {
                    self.consistent(m).map(|solution| Hypothesis {
                        members: m.clone(),
                        solution,
                    })
                })
                .collect::<Vec<_>>()
                .into_iter()
                .min_by(|a, b| a.solution.rms_residual.total_cmp(&b.solution.rms_residual));
            if best.is_some() {
                return best;
            }
            start = end;
        }
        None
    }

    fn enumerate(&self, groups: &[Vec<usize>], g: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let remaining = groups.len() - g;
        if current.len() + remaining < self.min {
            return;
        }
        if g == groups.len() {
            let mut s = current.clone();
            s.sort_unstable();
            out.push(s);
            return;
        }
        for &i in &groups[g] {
            if current.iter().all(|&j| self.compatible(i, j)) {
                current.push(i);
                self.enumerate(groups, g + 1, current, out);
                current.pop();
            }
        }
        self.enumerate(groups, g + 1, current, out);
    }

    fn trial(&self, trial: usize) -> Option<(Hypothesis, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        rng.set_stream(trial as u64);
        let need = min_sensors(&self.cfg.constraint);
        let all: Vec<usize> = (0..self.pool.len()).collect();
        let mut sample: Vec<usize> = Vec::with_capacity(need);
        // Bounded redraws keep a pathological pool from stalling a trial.
        for _ in 0..need * 8 {
            if sample.len() == need {
                break;
            }
            let &i = all.choose(&mut rng)?;
            if sample.iter().all(|&j| self.compatible(i, j)) {
                sample.push(i);
            }
        }
        if sample.len() < need {
            return None;
        }
        sample.sort_unstable();
        let seed_solution = self.solve(&sample)?;
        let members = filter_indices(
            self.pool,
            &seed_solution,
            self.params.residual_tolerance,
            self.cfg.speed_of_sound,
        );
        if members.len() < self.min {
            return None;
        }
        let solution = self.solve(&members)?;
        Some((Hypothesis { members, solution }, trial))
    }

    fn consensus(&self) -> Option<Hypothesis> {
        (0..self.params.ransac_trials)
            .into_par_iter()
            .filter_map(|t| self.trial(t))
            .min_by(|(a, ta), (b, tb)| {
                let (ka, kb) = (a.rank_key(), b.rank_key());
                ka.0.cmp(&kb.0)
                    .then_with(|| ka.1.total_cmp(&kb.1))
                    .then_with(|| ta.cmp(tb))
            })
            .map(|(h, _)| h)
    }

    /// Solve, filter, re-solve until membership is stable. Only rounds whose
    /// members all fit their own solution are eligible; among those the largest
    /// (then lowest RMS) is kept.
    fn refine(&self, start: Hypothesis) -> Option<Hypothesis> {
        let tol = self.params.residual_tolerance;
        let c = self.cfg.speed_of_sound;
        let mut best: Option<Hypothesis> = None;
        let mut current = start;
        for _ in 0..MAX_REFINE_ROUNDS {
            let next = filter_indices(self.pool, &current.solution, tol, c);
            let fits = current.solution.residuals.values().all(|r| r.abs() <= tol);
            if fits && current.members.len() >= self.min {
                let better = best.as_ref().is_none_or(|b| {
                    let (kc, kb) = (current.rank_key(), b.rank_key());
                    kc.0.cmp(&kb.0).then_with(|| kc.1.total_cmp(&kb.1)).is_lt()
                });
                if better {
                    best = Some(current.clone());
                }
            }
            if next == current.members || next.len() < self.min {
                break;
            }
            let Some(solution) = self.solve(&next) else {
                break;
            };
            current = Hypothesis {
                members: next,
                solution,
            };
        }
        best
    }
}

/// Largest mutually consistent pulse set in the pool, with its solution.
pub fn select_pulse_set(
    pool: &CandidatePool,
    params: &ConsistencyParams,
    cfg: &SolverConfig,
) -> Result<(PulseSet, ShotSolution)> {
    params.validate()?;
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::Precondition("candidate pool is empty".into()));
    }
    let search = Search {
        pool,
        params,
        cfg,
        min: params.effective_min(cfg),
    };
    if pool.sensor_count() < search.min {
        return Err(Error::NoConsistentSet);
    }
    let start = if pool.len() <= params.max_exhaustive {
        search.exhaustive()
    } else {
        search.consensus()
    };
    let best = start.and_then(|h| search.refine(h)).ok_or(Error::NoConsistentSet)?;
    let set = search.pulse_set(&best.members)?;
    Ok((set, best.solution))
}

/// Repeatedly extracts consistent sets, removing each from the pool, until
/// none remains.
pub fn select_all(
    pool: &CandidatePool,
    params: &ConsistencyParams,
    cfg: &SolverConfig,
) -> Result<Vec<(PulseSet, ShotSolution)>> {
    let mut out = Vec::new();
    let mut rest = pool.clone();
    while !rest.is_empty() {
        match select_pulse_set(&rest, params, cfg) {
            Ok((set, sol)) => {
                rest = rest.without(&set);
                out.push((set, sol));
            }
            Err(Error::NoConsistentSet) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
