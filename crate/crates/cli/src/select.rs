use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use gunloc_core::consistency::{select_all, DEFAULT_MAX_PER_SENSOR, DEFAULT_TOLERANCE};
use gunloc_core::{speed_of_sound, Candidate, CandidatePool, ConsistencyParams, Error};
use rayon::prelude::*;
use serde::Serialize;

use crate::io::{self, InputFormat, PulseFormat, PulseRecord};
use crate::{AlgorithmArg, Outcome, OutputArgs, SolverArgs};

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Candidate pulse file; every pulse of a shot id is a candidate for that id.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "pulse")]
    pub input_format: InputFormat,
    /// Residual tolerance, milliseconds.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE * 1e3)]
    pub tolerance_ms: f64,
    /// Smallest acceptable set (never below d + 2).
    #[arg(long)]
    pub min_sensors: Option<usize>,
    /// Pools with at most this many pulses are searched exhaustively.
    #[arg(long, default_value_t = 12)]
    pub max_exhaustive: usize,
    /// Random hypotheses for larger pools.
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Most candidate pulses one sensor may contribute to a cluster.
    #[arg(long, default_value_t = DEFAULT_MAX_PER_SENSOR)]
    pub max_per_sensor: usize,
    #[arg(long, value_enum, default_value = "mlg")]
    pub algorithm: AlgorithmArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Time gap in seconds that splits a shot id into separate clusters.
    /// Defaults to the array's acoustic span plus the tolerance.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Output pulse file format; defaults from the output extension.
    #[arg(long, value_enum)]
    pub format: Option<PulseFormat>,
    #[command(flatten)]
    pub out: OutputArgs,
    /// JSON sidecar listing every cluster and those without a consistent set.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum ClusterStatus {
    Selected,
    NoConsistentSet,
    Invalid,
}

#[derive(Debug, Serialize)]
struct ClusterReport {
    cluster: String,
    pulses: usize,
    sensors: usize,
    window_s: (f64, f64),
    sets: usize,
    status: ClusterStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct SelectReport {
    clusters: Vec<ClusterReport>,
    unresolved: Vec<String>,
}

/// Splits time-sorted records wherever consecutive arrivals differ by more than `gap`.
fn clusters(mut records: Vec<&PulseRecord>, gap: f64) -> Vec<Vec<&PulseRecord>> {
    records.sort_by(|a, b| a.arrival_time_s.total_cmp(&b.arrival_time_s));
    let mut out: Vec<Vec<&PulseRecord>> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some(c) if r.arrival_time_s - c.last().unwrap().arrival_time_s <= gap => c.push(r),
            _ => out.push(vec![r]),
        }
    }
    out
}

/// Largest horizontal sensor separation, meters.
fn span(records: &[&PulseRecord]) -> f64 {
    let mut sensors: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for r in records {
        sensors.insert(&r.sensor_id, (r.x_m, r.y_m));
    }
    let pts: Vec<(f64, f64)> = sensors.into_values().collect();
    let mut best = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    best
}

pub fn run(args: &SelectArgs) -> Result<Outcome> {
    if args.algorithm == AlgorithmArg::All {
        bail!("select needs a single --algorithm");
    }
    if args.solver.wind.is_some() {
        bail!("select does not apply wind correction; omit --wind");
    }
    if let Some(g) = args.gap {
        if !(g > 0.0) {
            bail!("--gap must be positive");
        }
    }
    let kind = args.algorithm.kinds()[0];
    let cfg = args.solver.config(kind, args.solver.temp_c)?;
    let params = ConsistencyParams {
        residual_tolerance: args.tolerance_ms * 1e-3,
        min_sensors: args.min_sensors,
        max_exhaustive: args.max_exhaustive,
        ransac_trials: args.trials,
        seed: args.seed,
    };
    params.validate()?;
    let c = speed_of_sound(args.solver.temp_c)?;

    let records = io::read_pulses(&args.input, args.input_format)?;
    let mut by_shot: BTreeMap<&str, Vec<&PulseRecord>> = BTreeMap::new();
    for r in &records {
        by_shot.entry(&r.shot_id).or_default().push(r);
    }
    let mut pools: Vec<(String, Vec<&PulseRecord>)> = Vec::new();
    for (shot, recs) in by_shot {
        let gap = args.gap.unwrap_or(span(&recs) / c + params.residual_tolerance);
        let parts = clusters(recs, gap);
        let many = parts.len() > 1;
        for (k, part) in parts.into_iter().enumerate() {
            let id = if many { format!("{shot}@{k}") } else { shot.to_string() };
            pools.push((id, part));
        }
    }

    let results: Vec<(ClusterReport, Vec<PulseRecord>)> = pools
        .par_iter()
        .map(|(id, part)| {
            let lo = part.first().map_or(0.0, |r| r.arrival_time_s);
            let hi = part.last().map_or(0.0, |r| r.arrival_time_s);
            let mut report = ClusterReport {
                cluster: id.clone(),
                pulses: part.len(),
                sensors: part
                    .iter()
                    .map(|r| r.sensor_id.as_str())
                    .collect::<std::collections::BTreeSet<_>>()
                    .len(),
                window_s: (lo, hi),
                sets: 0,
                status: ClusterStatus::Selected,
                error: None,
            };
            let candidates = part
                .iter()
                .map(|r| {
                    let o = r.observation();
                    let cand = Candidate::new(o.sensor_id, o.position, o.arrival_time, r.snr_db.unwrap_or(0.0));
                    match r.amplitude_dbspl {
                        Some(a) => cand.with_amplitude(a),
                        None => cand,
                    }
                })
                .collect();
            let outcome = CandidatePool::new(id.clone(), candidates, (lo, hi), args.max_per_sensor)
                .and_then(|pool| select_all(&pool, &params, &cfg));
            let mut rows = Vec::new();
            match outcome {
                Ok(sets) if sets.is_empty() => {
                    report.status = ClusterStatus::NoConsistentSet;
                    report.error = Some(Error::NoConsistentSet.to_string());
                }
                Ok(sets) => {
                    report.sets = sets.len();
                    for (k, (set, _)) in sets.iter().enumerate() {
                        let shot_id = format!("{id}#{k}");
                        rows.extend(
                            set.observations()
                                .iter()
                                .map(|o| PulseRecord::from_observation(&shot_id, o)),
                        );
                    }
                }
                Err(e) => {
                    report.status = ClusterStatus::Invalid;
                    report.error = Some(e.to_string());
                }
            }
            (report, rows)
        })
        .collect();

    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for (report, r) in results {
        reports.push(report);
        rows.extend(r);
    }
    let unresolved: Vec<String> = reports
        .iter()
        .filter(|r| r.status != ClusterStatus::Selected)
        .map(|r| r.cluster.clone())
        .collect();
    for r in reports.iter().filter(|r| r.status != ClusterStatus::Selected) {
        eprintln!("cluster {}: {}", r.cluster, r.error.as_deref().unwrap_or(""));
    }

    let format = args.format.unwrap_or_else(|| {
        args.out
            .output
            .as_deref()
            .map(PulseFormat::for_path)
            .unwrap_or(PulseFormat::Csv)
    });
    io::write_pulses(io::output(args.out.output.as_deref())?, &rows, format)?;
    if let Some(path) = &args.report {
        let mut w = io::output(Some(path))?;
        serde_json::to_writer_pretty(
            &mut w,
            &SelectReport {
                clusters: reports,
                unresolved: unresolved.clone(),
            },
        )?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(if unresolved.is_empty() {
        Outcome::Success
    } else {
        Outcome::Partial
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(sensor: &str, x: f64, t: f64) -> PulseRecord {
        PulseRecord {
            shot_id: "p".into(),
            sensor_id: sensor.into(),
            x_m: x,
            y_m: 0.0,
            z_m: 0.0,
            arrival_time_s: t,
            amplitude_dbspl: None,
            snr_db: None,
        }
    }

    #[test]
    fn splits_on_gaps() {
        let rs = [
            rec("a", 0.0, 1.0),
            rec("b", 300.0, 1.5),
            rec("a", 0.0, 9.0),
            rec("b", 300.0, 1.2),
        ];
        let parts = clusters(rs.iter().collect(), 1.0);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].len(), 3);
        assert_eq!(parts[1][0].arrival_time_s, 9.0);
        assert_eq!(span(&rs.iter().collect::<Vec<_>>()), 300.0);
    }
}
