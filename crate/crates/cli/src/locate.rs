use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use gunloc_core::sim::accuracy_report_for;
use gunloc_core::{locate, AccuracyReport, Position, PulseSet, ShotSolution, SolverKind};
use rayon::prelude::*;
use serde::Serialize;

use crate::io::{self, InputFormat};
use crate::{AlgorithmArg, Outcome, OutputArgs, SolverArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LocateFormat {
    Json,
    Table,
    Csv,
}

#[derive(Debug, Args)]
pub struct LocateArgs {
    /// Pulse file (CSV or JSON).
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "pulse")]
    pub input_format: InputFormat,
    #[arg(long, value_enum, default_value = "mlg")]
    pub algorithm: AlgorithmArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Surveyed source position `X,Y[,Z]` applied to every shot.
    #[arg(long, value_parser = parse_survey, allow_hyphen_values = true, conflicts_with = "survey_file")]
    pub survey: Option<Position>,
    /// CSV of surveyed firing positions (firing_position, x_m, y_m, z_m, temperature_c).
    /// A shot belongs to the firing position named before the first `/` of its id.
    #[arg(long)]
    pub survey_file: Option<PathBuf>,
    /// Output format; `table` when `--algorithm all`, `json` otherwise.
    #[arg(long, value_enum)]
    pub format: Option<LocateFormat>,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn parse_survey(s: &str) -> std::result::Result<Position, String> {
    let v = io::parse_tuple(s, 2, 3)?;
    Ok(Position::new(v[0], v[1], v.get(2).copied().unwrap_or(0.0)))
}

#[derive(Debug, Serialize)]
struct SolutionOut<'a> {
    shot_id: &'a str,
    sensors: usize,
    #[serde(flatten)]
    solution: &'a ShotSolution,
}

#[derive(Debug, Serialize)]
struct FailureOut<'a> {
    shot_id: &'a str,
    algorithm: SolverKind,
    sensors: usize,
    error: String,
}

#[derive(Debug, Serialize)]
struct ReportOut {
    algorithm: SolverKind,
    group: String,
    report: Option<AccuracyReport>,
}

#[derive(Debug, Serialize)]
struct LocateOut<'a> {
    solutions: Vec<SolutionOut<'a>>,
    failures: Vec<FailureOut<'a>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    reports: Vec<ReportOut>,
}

/// Survey group of a shot: the id prefix before `/`, or the whole id.
fn group_of(shot_id: &str) -> &str {
    shot_id.split_once('/').map_or(shot_id, |(g, _)| g)
}

struct Job<'a> {
    shot_id: &'a str,
    set: &'a PulseSet,
    kind: SolverKind,
    temperature_c: f64,
}

pub fn run(args: &LocateArgs) -> Result<Outcome> {
    let records = io::read_pulses(&args.input, args.input_format)?;
    let shots = io::group_shots(&records)?;
    let kinds = args.algorithm.kinds();
    args.solver.constraint()?;

    // Survey point and temperature per group.
    let surveys: BTreeMap<String, (Position, f64)> = match (&args.survey, &args.survey_file) {
        (Some(p), _) => BTreeMap::from([(String::new(), (*p, args.solver.temp_c))]),
        (None, Some(path)) => io::read_survey(path)?
            .into_iter()
            .map(|(k, r)| {
                let temp = r.temperature_c.unwrap_or(args.solver.temp_c);
                (k, (Position::new(r.x_m, r.y_m, r.z_m), temp))
            })
            .collect(),
        (None, None) => BTreeMap::new(),
    };
    let survey_key = |shot_id: &str| -> Option<String> {
        if args.survey.is_some() {
            Some(String::new())
        } else {
            let g = group_of(shot_id);
            surveys.contains_key(g).then(|| g.to_string())
        }
    };

    let jobs: Vec<Job> = shots
        .iter()
        .flat_map(|(id, set)| {
            let temperature_c = survey_key(id).map_or(args.solver.temp_c, |k| surveys[&k].1);
            kinds.iter().map(move |&kind| Job {
                shot_id: id,
                set,
                kind,
                temperature_c,
            })
        })
        .collect();
    let results: Vec<Result<ShotSolution, String>> = jobs
        .par_iter()
        .map(|job| {
            let run = || -> Result<ShotSolution> {
                let env = args.solver.environment(job.temperature_c)?;
                let cfg = args.solver.config(job.kind, job.temperature_c)?;
                Ok(locate(job.set, &cfg, &env, args.solver.wind_mode())?)
            };
            run().map_err(|e| format!("{e:#}"))
        })
        .collect();

    let mut out = LocateOut {
        solutions: Vec::new(),
        failures: Vec::new(),
        reports: Vec::new(),
    };
    for (job, result) in jobs.iter().zip(&results) {
        match result {
            Ok(solution) => out.solutions.push(SolutionOut {
                shot_id: job.shot_id,
                sensors: job.set.len(),
                solution,
            }),
            Err(error) => out.failures.push(FailureOut {
                shot_id: job.shot_id,
                algorithm: job.kind,
                sensors: job.set.len(),
                error: error.clone(),
            }),
        }
    }

    let mut table_rows = Vec::new();
    for &kind in &kinds {
        for (key, (survey, _)) in &surveys {
            let in_group: Vec<(&Job, &Result<ShotSolution, String>)> = jobs
                .iter()
                .zip(&results)
                .filter(|(j, _)| j.kind == kind && survey_key(j.shot_id).as_ref() == Some(key))
                .collect();
            if in_group.is_empty() {
                continue;
            }
            let located: Vec<(String, Position)> = in_group
                .iter()
                .filter_map(|(j, r)| r.as_ref().ok().map(|s| (j.shot_id.to_string(), s.position)))
                .collect();
            let sensors: usize = in_group
                .iter()
                .filter(|(_, r)| r.is_ok())
                .map(|(j, _)| j.set.len())
                .sum();
            let report = if located.is_empty() {
                None
            } else {
                Some(accuracy_report_for(&located, survey, in_group.len())?)
            };
            let group = if key.is_empty() { "all".to_string() } else { key.clone() };
            table_rows.push(TableRow {
                kind,
                group: group.clone(),
                located: located.len(),
                attempted: in_group.len(),
                mean_sensors: if located.is_empty() {
                    None
                } else {
                    Some(sensors as f64 / located.len() as f64)
                },
                report: report.clone(),
            });
            out.reports.push(ReportOut {
                algorithm: kind,
                group,
                report,
            });
        }
    }

    let format = args.format.unwrap_or(if args.algorithm == AlgorithmArg::All {
        LocateFormat::Table
    } else {
        LocateFormat::Json
    });
    let mut w = io::output(args.out.output.as_deref())?;
    match format {
        LocateFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &out)?;
            writeln!(w)?;
        }
        LocateFormat::Csv => write_csv(&mut w, &out)?,
        LocateFormat::Table if table_rows.is_empty() => write_solution_table(&mut w, &out)?,
        LocateFormat::Table => write_report_table(&mut w, &table_rows)?,
    }
    w.flush()?;
    for f in &out.failures {
        eprintln!("shot {} ({}): {}", f.shot_id, f.algorithm, f.error);
    }
    if out.failures.is_empty() {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Partial)
    }
}

struct TableRow {
    kind: SolverKind,
    group: String,
    located: usize,
    attempted: usize,
    mean_sensors: Option<f64>,
    report: Option<AccuracyReport>,
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

/// Per-algorithm accuracy table: located/attempted, mean sensors per located
/// shot, centroid and RMS survey error and the principal spreads, all in meters.
fn write_report_table(w: &mut dyn Write, rows: &[TableRow]) -> Result<()> {
    writeln!(
        w,
        "{:<14} {:<10} {:>7} {:>6} {:>10} {:>10} {:>9} {:>9}",
        "Algo", "Group", "N/M", "n", "eps_c[m]", "eps_rms[m]", "sig1[m]", "sig2[m]"
    )?;
    for r in rows {
        let rep = r.report.as_ref();
        writeln!(
            w,
            "{:<14} {:<10} {:>7} {:>6} {:>10} {:>10} {:>9} {:>9}",
            r.kind.name(),
            r.group,
            format!("{}/{}", r.located, r.attempted),
            opt(r.mean_sensors, 1),
            opt(rep.map(|x| x.epsilon_centroid), 2),
            opt(rep.map(|x| x.epsilon_rms), 2),
            opt(rep.and_then(|x| x.sigma1), 2),
            opt(rep.and_then(|x| x.sigma2), 2),
        )?;
    }
    Ok(())
}

fn write_solution_table(w: &mut dyn Write, out: &LocateOut) -> Result<()> {
    writeln!(
        w,
        "{:<16} {:<14} {:>3} {:>12} {:>12} {:>9} {:>16} {:>11}",
        "Shot", "Algo", "n", "x[m]", "y[m]", "z[m]", "t*[s]", "rms[ms]"
    )?;
    for s in &out.solutions {
        let p = &s.solution.position;
        writeln!(
            w,
            "{:<16} {:<14} {:>3} {:>12.3} {:>12.3} {:>9.3} {:>16.6} {:>11.3}",
            s.shot_id,
            s.solution.solver.name(),
            s.sensors,
            p.x,
            p.y,
            p.z,
            s.solution.discharge_time,
            1e3 * s.solution.rms_residual
        )?;
    }
    for f in &out.failures {
        writeln!(
            w,
            "{:<16} {:<14} {:>3} failed: {}",
            f.shot_id,
            f.algorithm.name(),
            f.sensors,
            f.error
        )?;
    }
    Ok(())
}

fn write_csv(w: &mut dyn Write, out: &LocateOut) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "shot_id",
        "algorithm",
        "sensors",
        "x_m",
        "y_m",
        "z_m",
        "discharge_time_s",
        "rms_residual_s",
        "error",
    ])?;
    for s in &out.solutions {
        let p = &s.solution.position;
        csv.write_record([
            s.shot_id.to_string(),
            s.solution.solver.name().to_string(),
            s.sensors.to_string(),
            format!("{:.3}", p.x),
            format!("{:.3}", p.y),
            format!("{:.3}", p.z),
            format!("{:.6}", s.solution.discharge_time),
            format!("{:.6}", s.solution.rms_residual),
            String::new(),
        ])?;
    }
    for f in &out.failures {
        csv.write_record([
            f.shot_id.to_string(),
            f.algorithm.name().to_string(),
            f.sensors.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            f.error.clone(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
