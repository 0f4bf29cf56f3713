use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use gunloc_core::sim::{DEFAULT_GATE_DBSPL, DEFAULT_TRIALS};
use gunloc_core::{
    generate_scenario, reduced_density_trial, AccuracyReport, Position, ScenarioConfig, SolverConfig, TrialSpec,
};
use serde::Serialize;

use crate::io;
use crate::{AlgorithmArg, ConstraintArg, Outcome, SolverArgs, WindModeArg};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Participating sensors per trial array; repeatable. Defaults to every sensor.
    #[arg(long = "k")]
    pub k: Vec<usize>,
    /// Random sub-arrays per k.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    /// Loudest participating pulse must reach this level, dB SPL.
    #[arg(long, default_value_t = DEFAULT_GATE_DBSPL, allow_hyphen_values = true)]
    pub gate_dbspl: f64,
    /// Overrides the scenario seed; trial streams derive from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "mlg")]
    pub algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value = "2d")]
    pub constraint: ConstraintArg,
    /// Plane elevation for the 2.5d constraint, meters.
    #[arg(long, allow_hyphen_values = true)]
    pub z_star: Option<f64>,
    /// Report JSON; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// CDF table: threshold_m then one fraction column per k.
    #[arg(long)]
    pub cdf: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct KResult {
    k: usize,
    trials: usize,
    /// `None` when no trial produced a solution.
    report: Option<AccuracyReport>,
}

#[derive(Debug, Serialize)]
struct SimulateOut {
    scenario: ScenarioConfig,
    algorithm: gunloc_core::SolverKind,
    sensors: usize,
    speed_of_sound_m_s: f64,
    truth: Position,
    nlos_sensors: Vec<String>,
    gate_dbspl: f64,
    results: Vec<KResult>,
}

pub fn run(args: &SimulateArgs) -> Result<Outcome> {
    if args.algorithm == AlgorithmArg::All {
        bail!("simulate needs a single --algorithm");
    }
    let mut scenario_cfg: ScenarioConfig = match &args.config {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("{}: cannot open", path.display()))?;
            serde_json::from_reader(BufReader::new(f)).with_context(|| path.display().to_string())?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        scenario_cfg.seed = seed;
    }
    let scenario = generate_scenario(&scenario_cfg)?;

    // Only the geometric constraint matters here; temperature comes from the scenario.
    let solver = SolverArgs {
        constraint: args.constraint,
        z_star: args.z_star,
        temp_c: scenario_cfg.temperature_c,
        wind: None,
        wind_mode: WindModeArg::TwoPass,
    };
    let kind = args.algorithm.kinds()[0];
    let cfg: SolverConfig = solver.config(kind, scenario_cfg.temperature_c)?;

    let ks = if args.k.is_empty() {
        vec![scenario.sensors.len()]
    } else {
        args.k.clone()
    };
    let mut results = Vec::with_capacity(ks.len());
    for &k in &ks {
        let spec = TrialSpec {
            k,
            trials: args.trials,
            gate_dbspl: args.gate_dbspl,
            seed: scenario_cfg.seed,
        };
        let report = reduced_density_trial(&scenario.direct, &scenario.truth, &spec, &cfg)
            .with_context(|| format!("k = {k}"))?;
        results.push(KResult {
            k,
            trials: args.trials,
            report,
        });
    }

    if let Some(path) = &args.cdf {
        let mut w = io::output(Some(path))?;
        write!(w, "threshold_m")?;
        for r in &results {
            write!(w, ",fraction_k{}", r.k)?;
        }
        writeln!(w)?;
        for (i, m) in gunloc_core::sim::CDF_THRESHOLDS.enumerate() {
            write!(w, "{m}")?;
            for r in &results {
                let f = r.report.as_ref().map_or(0.0, |rep| rep.cdf[i].1);
                write!(w, ",{f:.4}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
    }

    let located_any = results.iter().any(|r| r.report.is_some());
    let out = SimulateOut {
        sensors: scenario.sensors.len(),
        speed_of_sound_m_s: scenario.speed_of_sound,
        truth: scenario.truth,
        nlos_sensors: scenario.nlos_sensors,
        algorithm: kind,
        gate_dbspl: args.gate_dbspl,
        scenario: scenario_cfg,
        results,
    };
    let mut w = io::output(args.output.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    writeln!(w)?;
    w.flush()?;
    Ok(if located_any {
        Outcome::Success
    } else {
        Outcome::Partial
    })
}
