//! Environment-aware location: speed of sound from temperature, then wind
//! correction and solve.

use serde::{Deserialize, Serialize};

use crate::atmosphere::{wind_correct, Environment};
use crate::error::Result;
use crate::geo::{PulseSet, ShotSolution};
use crate::solvers::{solve, SolverConfig};

/// How many wind-correction passes to run when the wind is nonzero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindMode {
    /// Correct with `t_* = t_0 - 1 s` and solve once.
    SinglePass,
    /// As single pass, then correct again with the solved discharge time and re-solve.
    #[default]
    TwoPass,
}

/// Solves `set` under `env`. The speed of sound in `cfg` is replaced by the
/// value derived from the environment temperature. Residuals of the returned
/// solution refer to the wind-corrected sensor positions.
pub fn locate(set: &PulseSet, cfg: &SolverConfig, env: &Environment, mode: WindMode) -> Result<ShotSolution> {
    env.validate()?;
    let cfg = SolverConfig {
        speed_of_sound: env.speed_of_sound()?,
        ..cfg.clone()
    };
    if env.is_calm() {
        return solve(set, &cfg);
    }
    let corrected = wind_correct(set, env, None)?;
    let first = solve(&corrected, &cfg)?;
    if mode == WindMode::SinglePass {
        return Ok(first);
    }
    let t0 = set.first_arrival().unwrap_or(first.discharge_time);
    let corrected = wind_correct(set, env, Some(first.discharge_time.min(t0)))?;
    solve(&corrected, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeometricConstraint, Position, SensorObservation, SolverKind};

    #[test]
    fn calm_air_matches_direct_solve() {
        let env = Environment::new(20.0, (0.0, 0.0)).unwrap();
        let c = env.speed_of_sound().unwrap();
        let src = Position::new(120.0, -40.0, 0.0);
        let obs = [
            (0.0, 0.0),
            (400.0, 30.0),
            (350.0, 420.0),
            (-60.0, 380.0),
            (200.0, -300.0),
        ]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let p = Position::new(x, y, 0.0);
            SensorObservation::new(format!("s{i}"), p, 10.0 + src.distance(&p) / c)
        })
        .collect();
        let set = PulseSet::new("calm", obs).unwrap();
        let cfg = SolverConfig::new(SolverKind::Mlg, GeometricConstraint::TwoD, 343.0);
        let a = locate(&set, &cfg, &env, WindMode::TwoPass).unwrap();
        let b = solve(
            &set,
            &SolverConfig {
                speed_of_sound: c,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.position.horizontal_distance(&src) < 1e-6);
    }
}
