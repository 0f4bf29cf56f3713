//! Impulsive acoustic source location from time-of-arrival measurements.
//!
//! The crate covers the full chain from audio to position: pulse detection
//! ([`pulse`]), atmospheric correction ([`atmosphere`]), the multilateration
//! solvers ([`solvers`]), mutual-consistency pulse selection
//! ([`consistency`]) and synthetic scenarios with accuracy metrics ([`sim`]).
//! All coordinates are local Cartesian meters, all times are seconds.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atmosphere;
pub mod consistency;
pub mod error;
pub mod geo;
pub mod pipeline;
pub mod pulse;
pub mod sim;
pub mod solvers;

pub use atmosphere::{speed_of_sound, wind_correct, Environment};
pub use consistency::{consistency_filter, select_pulse_set, Candidate, CandidatePool, ConsistencyParams};
pub use error::{Error, Result};
pub use geo::{
    project_to_plane, reflect_through_plane, Diagnostics, GeometricConstraint, Position, PulseSet, SensorObservation,
    ShotSolution, SolverKind,
};
pub use pipeline::{locate, WindMode};
pub use pulse::{amplitude_to_dbspl, detect_pulses, AudioSegment, DetectedPulse};
pub use sim::{
    accuracy_report, generate_scenario, reduced_density_trial, AccuracyReport, Scenario, ScenarioConfig, TrialSpec,
};
pub use solvers::{predict_arrival, solve, SolverConfig};
