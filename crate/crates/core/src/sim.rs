//! Synthetic scenarios, reduced-density experiments and accuracy metrics.
//!
//! All randomness comes from ChaCha8 seeded with the scenario or trial seed.
//! Independent trials use separate streams of one seed (`set_stream(trial)`),
//! so parallel and serial runs draw the same numbers.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atmosphere::{speed_of_sound, Environment};
use crate::consistency::{Candidate, CandidatePool, DEFAULT_MAX_PER_SENSOR};
use crate::error::{Error, Result};
use crate::geo::{max_amplitude_dbspl, Position, PulseSet, SensorObservation, ShotSolution};
use crate::solvers::{min_sensors, solve, SolverConfig};

/// Admissible deployment density, sensors/km².
pub const DENSITY_RANGE: (f64, f64) = (2.0, 12.0);
/// Thresholds, in meters, at which the accuracy CDF is evaluated.
pub const CDF_THRESHOLDS: std::ops::RangeInclusive<u32> = 1..=25;
/// Default amplitude gate for reduced-density trials, dB SPL.
pub const DEFAULT_GATE_DBSPL: f64 = 73.0;
/// Arrays drawn per firing point in a reduced-density trial.
pub const DEFAULT_TRIALS: usize = 25;

/// Positive extra path delay on a random subset of direct arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlosSpec {
    pub probability: f64,
    /// Uniform delay range, seconds.
    pub delay: (f64, f64),
}

impl Default for NlosSpec {
    fn default() -> Self {
        Self {
            probability: 0.2,
            delay: (0.005, 0.040),
        }
    }
}

/// Late copies of each direct arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EchoSpec {
    /// Inclusive range of echoes per sensor.
    pub count: (usize, usize),
    /// Uniform delay range after the direct arrival, seconds.
    pub delay: (f64, f64),
    /// Level drop relative to the direct arrival, dB.
    pub attenuation_db: f64,
}

impl Default for EchoSpec {
    fn default() -> Self {
        Self {
            count: (0, 0),
            delay: (0.080, 0.300),
            attenuation_db: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Exactly one of `sensor_count` and `sensor_density` must be set.
    pub sensor_count: Option<usize>,
    /// Sensors per km².
    pub sensor_density: Option<f64>,
    /// `(width, height)` in meters; sensors are uniform over `[0, w] × [0, h]`.
    pub area: (f64, f64),
    /// Uniform sensor elevation range, meters.
    pub sensor_z: (f64, f64),
    pub source: Position,
    /// Seconds on the shared epoch.
    pub discharge_time: f64,
    pub temperature_c: f64,
    pub wind: (f64, f64),
    /// Gaussian arrival-time noise, seconds.
    pub timing_noise_sigma: f64,
    pub nlos: NlosSpec,
    pub echoes: EchoSpec,
    /// Muzzle blast level at 1 m, dB SPL.
    pub source_level_dbspl: f64,
    /// Uniform extra attenuation range applied per sensor, dB.
    pub excess_attenuation_db: (f64, f64),
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            sensor_count: Some(10),
            sensor_density: None,
            area: (1000.0, 1000.0),
            sensor_z: (0.0, 0.0),
            source: Position::new(500.0, 500.0, 0.0),
            discharge_time: 100.0,
            temperature_c: 20.0,
            wind: (0.0, 0.0),
            timing_noise_sigma: 100e-6,
            nlos: NlosSpec::default(),
            echoes: EchoSpec::default(),
            source_level_dbspl: 140.0,
            excess_attenuation_db: (0.0, 20.0),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Noise-free, outlier-free variant of the defaults.
    pub fn clean() -> Self {
        Self {
            timing_noise_sigma: 0.0,
            nlos: NlosSpec {
                probability: 0.0,
                ..NlosSpec::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        let (w, h) = self.area;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return bad(format!("invalid area ({w}, {h})"));
        }
        match (self.sensor_count, self.sensor_density) {
            (Some(_), Some(_)) | (None, None) => {
                return bad("set exactly one of sensor_count and sensor_density".into());
            }
            (None, Some(d)) if !(d >= DENSITY_RANGE.0 && d <= DENSITY_RANGE.1) => {
                return bad(format!(
                    "density {d} sensors/km² outside [{}, {}]",
                    DENSITY_RANGE.0, DENSITY_RANGE.1
                ));
            }
            _ => {}
        }
        let (zlo, zhi) = self.sensor_z;
        if !(zlo.is_finite() && zhi.is_finite() && zlo <= zhi) {
            return bad(format!("invalid sensor elevation range ({zlo}, {zhi})"));
        }
        if !self.source.is_finite() || !self.discharge_time.is_finite() {
            return bad("source and discharge time must be finite".into());
        }
        if !(self.timing_noise_sigma >= 0.0 && self.timing_noise_sigma.is_finite()) {
            return bad(format!("invalid timing noise {}", self.timing_noise_sigma));
        }
        let n = &self.nlos;
        if !((0.0..=1.0).contains(&n.probability) && 0.0 <= n.delay.0 && n.delay.0 <= n.delay.1) {
            return bad("invalid NLOS spec".into());
        }
        let e = &self.echoes;
        if !(e.count.0 <= e.count.1 && 0.0 < e.delay.0 && e.delay.0 <= e.delay.1 && e.attenuation_db >= 0.0) {
            return bad("invalid echo spec".into());
        }
        if e.count.1 + 1 > DEFAULT_MAX_PER_SENSOR {
            return bad(format!("at most {} echoes per sensor", DEFAULT_MAX_PER_SENSOR - 1));
        }
        let (alo, ahi) = self.excess_attenuation_db;
        if !(0.0 <= alo && alo <= ahi) {
            return bad("invalid excess attenuation range".into());
        }
        Environment::new(self.temperature_c, self.wind)?;
        Ok(())
    }

    /// Number of sensors implied by the count or the density over the area.
    pub fn resolved_sensor_count(&self) -> usize {
        match (self.sensor_count, self.sensor_density) {
            (Some(n), _) => n,
            (None, Some(d)) => (d * self.area.0 * self.area.1 / 1e6).round() as usize,
            (None, None) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSensor {
    pub sensor_id: String,
    pub position: Position,
}

/// Output of [`generate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub sensors: Vec<SimSensor>,
    pub truth: Position,
    pub truth_time: f64,
    pub speed_of_sound: f64,
    /// First arrival on every sensor, including noise and NLOS delay.
    pub direct: PulseSet,
    /// Direct arrivals plus echoes.
    pub pool: CandidatePool,
    /// Sensor ids whose direct arrival carries an NLOS delay.
    pub nlos_sensors: Vec<String>,
}

/// Propagation time from `source` to `sensor` when the air moves with
/// horizontal velocity `wind`: the positive root of `|d - w τ| = c τ`.
pub fn travel_time(source: &Position, sensor: &Position, c: f64, wind: (f64, f64)) -> f64 {
    let d = [sensor.x - source.x, sensor.y - source.y, sensor.z - source.z];
    let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let dw = d[0] * wind.0 + d[1] * wind.1;
    let a = c * c - (wind.0 * wind.0 + wind.1 * wind.1);
    (-dw + (dw * dw + a * d2).sqrt()) / a
}

/// Builds sensors, arrivals and the candidate pool for one scenario.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let c = speed_of_sound(cfg.temperature_c)?;
    let n = cfg.resolved_sensor_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.timing_noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let width = (n.max(1) as f64).log10().floor() as usize + 1;

    let mut sensors = Vec::with_capacity(n);
    let mut direct = Vec::with_capacity(n);
    let mut pulses = Vec::new();
    let mut nlos_sensors = Vec::new();
    for i in 0..n {
        let position = Position::new(
            rng.random_range(0.0..=cfg.area.0),
            rng.random_range(0.0..=cfg.area.1),
            uniform(&mut rng, cfg.sensor_z),
        );
        let sensor_id = format!("S{i:0width$}");
        let mut t = cfg.discharge_time + travel_time(&cfg.source, &position, c, cfg.wind);
        if cfg.timing_noise_sigma > 0.0 {
            t += noise.sample(&mut rng);
        }
        if rng.random::<f64>() < cfg.nlos.probability {
            t += uniform(&mut rng, cfg.nlos.delay);
            nlos_sensors.push(sensor_id.clone());
        }
        let range = cfg.source.distance(&position).max(1.0);
        let level = (cfg.source_level_dbspl - 20.0 * range.log10() - uniform(&mut rng, cfg.excess_attenuation_db))
            .min(max_amplitude_dbspl());
        direct.push(SensorObservation::new(sensor_id.clone(), position, t).with_amplitude(level));
        pulses.push(Candidate::new(sensor_id.clone(), position, t, 1.0).with_amplitude(level));
        let echoes = rng.random_range(cfg.echoes.count.0..=cfg.echoes.count.1);
        for _ in 0..echoes {
            let delay = uniform(&mut rng, cfg.echoes.delay);
            pulses.push(
                Candidate::new(sensor_id.clone(), position, t + delay, 0.5)
                    .with_amplitude(level - cfg.echoes.attenuation_db),
            );
        }
        sensors.push(SimSensor { sensor_id, position });
    }
    let shot_id = format!("sim-{}", cfg.seed);
    let pool = if pulses.is_empty() {
        CandidatePool::from_pulses(shot_id.clone(), pulses)?
    } else {
        let lo = pulses.iter().map(|p| p.arrival_time).fold(f64::INFINITY, f64::min);
        let hi = pulses.iter().map(|p| p.arrival_time).fold(f64::NEG_INFINITY, f64::max);
        CandidatePool::new(shot_id.clone(), pulses, (lo, hi), DEFAULT_MAX_PER_SENSOR)?
    };
    Ok(Scenario {
        sensors,
        truth: cfg.source,
        truth_time: cfg.discharge_time,
        speed_of_sound: c,
        direct: PulseSet::new(shot_id, direct)?,
        pool,
        nlos_sensors,
    })
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Accuracy of a batch of solutions against a surveyed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// 2D distance from the centroid of the solutions to the survey point, m.
    pub epsilon_centroid: f64,
    /// 2D RMS distance of individual solutions from the survey point, m.
    pub epsilon_rms: f64,
    /// Principal spreads of the 2D scatter (population covariance), m.
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    /// Vertical offset of the centroid from the survey point, m.
    pub epsilon_z: f64,
    /// Median 2D error, m.
    pub cep50: f64,
    /// `(threshold m, fraction of attempted shots within it)`.
    pub cdf: Vec<(f64, f64)>,
    /// `(shot id, 2D error m)`.
    pub per_shot: Vec<(String, f64)>,
    /// Shots attempted, including those that produced no solution.
    pub attempted: usize,
    pub located: usize,
}

impl AccuracyReport {
    /// Fraction of attempted shots that produced a solution.
    pub fn detection_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.located as f64 / self.attempted as f64
        }
    }

    /// Fraction of attempted shots located within `meters`.
    pub fn fraction_within(&self, meters: f64) -> f64 {
        if self.attempted == 0 {
            return 0.0;
        }
        self.per_shot.iter().filter(|(_, e)| *e <= meters).count() as f64 / self.attempted as f64
    }
}

/// Report over solutions labelled by their index; every solution counts as attempted.
pub fn accuracy_report(solutions: &[ShotSolution], survey: &Position) -> Result<AccuracyReport> {
    let shots: Vec<(String, Position)> = solutions
        .iter()
        .enumerate()
        .map(|(i, s)| (i.to_string(), s.position))
        .collect();
    accuracy_report_for(&shots, survey, solutions.len())
}

/// Report over labelled positions out of `attempted` shots.
pub fn accuracy_report_for(
    shots: &[(String, Position)],
    survey: &Position,
    attempted: usize,
) -> Result<AccuracyReport> {
    if shots.is_empty() {
        return Err(Error::InvalidInput(
            "accuracy report needs at least one solution".into(),
        ));
    }
    if attempted < shots.len() {
        return Err(Error::InvalidInput(format!(
            "{attempted} attempted shots but {} solutions",
            shots.len()
        )));
    }
    let n = shots.len() as f64;
    let (mx, my, mz) = shots.iter().fold((0.0, 0.0, 0.0), |(x, y, z), (_, p)| {
        (x + p.x / n, y + p.y / n, z + p.z / n)
    });
    let epsilon_centroid = (mx - survey.x).hypot(my - survey.y);
    let per_shot: Vec<(String, f64)> = shots
        .iter()
        .map(|(id, p)| (id.clone(), p.horizontal_distance(survey)))
        .collect();
    let epsilon_rms = (per_shot.iter().map(|(_, e)| e * e).sum::<f64>() / n).sqrt();

    let (sigma1, sigma2) = if shots.len() >= 2 {
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (_, p) in shots {
            let (dx, dy) = (p.x - mx, p.y - my);
            sxx += dx * dx / n;
            syy += dy * dy / n;
            sxy += dx * dy / n;
        }
        let mean = 0.5 * (sxx + syy);
        let half_diff = (0.5 * (sxx - syy)).hypot(sxy);
        let l1 = mean + half_diff;
        let l2 = (mean - half_diff).max(0.0);
        (Some(l1.sqrt()), Some(l2.sqrt()))
    } else {
        (None, None)
    };

    let mut errors: Vec<f64> = per_shot.iter().map(|(_, e)| *e).collect();
    errors.sort_by(f64::total_cmp);
    let mid = errors.len() / 2;
    let cep50 = if errors.len() % 2 == 1 {
        errors[mid]
    } else {
        0.5 * (errors[mid - 1] + errors[mid])
    };
    let cdf = CDF_THRESHOLDS
        .map(|m| {
            let m = m as f64;
            let within = errors.partition_point(|e| *e <= m);
            (m, within as f64 / attempted as f64)
        })
        .collect();
    Ok(AccuracyReport {
        epsilon_centroid,
        epsilon_rms,
        sigma1,
        sigma2,
        epsilon_z: (mz - survey.z).abs(),
        cep50,
        cdf,
        per_shot,
        attempted,
        located: shots.len(),
    })
}

/// Parameters of a reduced-density experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    /// Participating sensors per array.
    pub k: usize,
    pub trials: usize,
    pub gate_dbspl: f64,
    pub seed: u64,
}

impl TrialSpec {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            trials: DEFAULT_TRIALS,
            gate_dbspl: DEFAULT_GATE_DBSPL,
            seed,
        }
    }
}

/// Outcome of one random sub-array.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Located(ShotSolution),
    /// Loudest participating sensor below the gate.
    Gated,
    Failed(Error),
}

/// Solves `trials` random `k`-sensor subsets of `set` (all sensors when fewer
/// than `k` are available). Trial `i` draws from stream `i` of `spec.seed`.
pub fn reduced_density_outcomes(set: &PulseSet, spec: &TrialSpec, cfg: &SolverConfig) -> Result<Vec<TrialOutcome>> {
    let needed = min_sensors(&cfg.constraint);
    if spec.k < needed {
        return Err(Error::InsufficientSensors { needed, got: spec.k });
    }
    if spec.trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let obs = set.observations();
    let k = spec.k.min(obs.len());
    Ok((0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(trial as u64);
            let chosen: Vec<SensorObservation> = sample(&mut rng, obs.len(), k)
                .into_iter()
                .map(|i| obs[i].clone())
                .collect();
            let subset = match PulseSet::new(format!("{}#{trial}", set.shot_id()), chosen) {
                Ok(s) => s,
                Err(e) => return TrialOutcome::Failed(e),
            };
            if !subset.max_amplitude_dbspl().is_some_and(|a| a >= spec.gate_dbspl) {
                return TrialOutcome::Gated;
            }
            match solve(&subset, cfg) {
                Ok(sol) => TrialOutcome::Located(sol),
                Err(e) => TrialOutcome::Failed(e),
            }
        })
        .collect())
}

/// Accuracy over the located trials of [`reduced_density_outcomes`]; gated and
/// failed trials count as attempted but not located. Returns `None` when no
/// trial produced a solution.
pub fn reduced_density_trial(
    set: &PulseSet,
    survey: &Position,
    spec: &TrialSpec,
    cfg: &SolverConfig,
) -> Result<Option<AccuracyReport>> {
    let outcomes = reduced_density_outcomes(set, spec, cfg)?;
    let shots: Vec<(String, Position)> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| match o {
            TrialOutcome::Located(sol) => Some((format!("{}#{i}", set.shot_id()), sol.position)),
            _ => None,
        })
        .collect();
    if shots.is_empty() {
        return Ok(None);
    }
    accuracy_report_for(&shots, survey, outcomes.len()).map(Some)
}
