//! `gunloc`: detect pulses in WAV files, select consistent pulse sets, locate
//! shots and run reduced-density simulations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod detect;
mod io;
mod locate;
mod select;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gunloc_core::{speed_of_sound, Environment, GeometricConstraint, SolverConfig, SolverKind, WindMode};

/// Exit status of a command that did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some shots or clusters could not be solved.
    Partial,
}

#[derive(Parser)]
#[command(
    name = "gunloc",
    version,
    about = "Acoustic gunshot location from sensor arrival times"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect impulses in WAV recordings and write a pulse file.
    Detect(detect::DetectArgs),
    /// Locate every shot in a pulse file.
    Locate(locate::LocateArgs),
    /// Pick mutually consistent pulse sets out of a candidate pool file.
    Select(select::SelectArgs),
    /// Run reduced-density Monte-Carlo trials on a synthetic scenario.
    Simulate(simulate::SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Reddi,
    Mlg,
    #[value(name = "least-squares", alias = "ls", alias = "leastsquares")]
    LeastSquares,
    Idt,
    All,
}

impl AlgorithmArg {
    pub fn kinds(self) -> Vec<SolverKind> {
        match self {
            AlgorithmArg::Reddi => vec![SolverKind::Reddi],
            AlgorithmArg::Mlg => vec![SolverKind::Mlg],
            AlgorithmArg::LeastSquares => vec![SolverKind::LeastSquares],
            AlgorithmArg::Idt => vec![SolverKind::Idt],
            AlgorithmArg::All => SolverKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    #[value(name = "2d")]
    TwoD,
    #[value(name = "2.5d")]
    TwoPointFiveD,
    #[value(name = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindModeArg {
    SinglePass,
    TwoPass,
}

/// Solver and atmosphere options shared by `locate` and `select`.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Geometric constraint.
    #[arg(long, value_enum, default_value = "2d")]
    pub constraint: ConstraintArg,
    /// Plane elevation in meters for the 2.5d constraint.
    #[arg(long, allow_hyphen_values = true)]
    pub z_star: Option<f64>,
    /// Air temperature in °C; sets the speed of sound.
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    pub temp_c: f64,
    /// Wind vector `VX,VY` in m/s.
    #[arg(long, value_parser = parse_wind, allow_hyphen_values = true)]
    pub wind: Option<(f64, f64)>,
    #[arg(long, value_enum, default_value = "two-pass")]
    pub wind_mode: WindModeArg,
}

fn parse_wind(s: &str) -> std::result::Result<(f64, f64), String> {
    let v = io::parse_tuple(s, 2, 2)?;
    Ok((v[0], v[1]))
}

impl SolverArgs {
    pub fn constraint(&self) -> Result<GeometricConstraint> {
        Ok(match (self.constraint, self.z_star) {
            (ConstraintArg::TwoD, _) => GeometricConstraint::TwoD,
            (ConstraintArg::ThreeD, _) => GeometricConstraint::ThreeD,
            (ConstraintArg::TwoPointFiveD, Some(z_star)) => GeometricConstraint::TwoPointFiveD { z_star },
            (ConstraintArg::TwoPointFiveD, None) => bail!("--constraint 2.5d needs --z-star"),
        })
    }

    pub fn environment(&self, temperature_c: f64) -> Result<Environment> {
        Ok(Environment::new(temperature_c, self.wind.unwrap_or((0.0, 0.0)))?)
    }

    pub fn wind_mode(&self) -> WindMode {
        match self.wind_mode {
            WindModeArg::SinglePass => WindMode::SinglePass,
            WindModeArg::TwoPass => WindMode::TwoPass,
        }
    }

    pub fn config(&self, kind: SolverKind, temperature_c: f64) -> Result<SolverConfig> {
        let cfg = SolverConfig::new(kind, self.constraint()?, speed_of_sound(temperature_c)?);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Common output flag.
#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(args) => detect::run(&args),
        Command::Locate(args) => locate::run(&args),
        Command::Select(args) => select::run(&args),
        Command::Simulate(args) => simulate::run(&args),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
