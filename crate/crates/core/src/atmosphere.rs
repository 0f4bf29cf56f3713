//! Speed of sound and homogeneous-wind correction of sensor positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Position, PulseSet, SensorObservation};

pub const ABSOLUTE_ZERO_C: f64 = -273.15;

/// Offset subtracted from the first arrival to guess the discharge time
/// when no better estimate is available, in seconds.
pub const DEFAULT_DISCHARGE_OFFSET: f64 = 1.0;

/// Sanity bound on horizontal wind speed, m/s.
pub const MAX_WIND_SPEED: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub temperature_c: f64,
    /// Horizontal wind `(v_x, v_y)` in m/s; vertical wind is taken as zero.
    pub wind: (f64, f64),
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            temperature_c: 20.0,
            wind: (0.0, 0.0),
        }
    }
}

impl Environment {
    pub fn new(temperature_c: f64, wind: (f64, f64)) -> Result<Self> {
        let env = Self { temperature_c, wind };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_c > ABSOLUTE_ZERO_C) {
            return Err(Error::Domain(format!(
                "temperature {} °C is at or below absolute zero",
                self.temperature_c
            )));
        }
        let (vx, vy) = self.wind;
        if !vx.is_finite() || !vy.is_finite() || vx.hypot(vy) >= MAX_WIND_SPEED {
            return Err(Error::Domain(format!("implausible wind ({vx}, {vy}) m/s")));
        }
        Ok(())
    }

    pub fn speed_of_sound(&self) -> Result<f64> {
        speed_of_sound(self.temperature_c)
    }

    pub fn is_calm(&self) -> bool {
        self.wind == (0.0, 0.0)
    }
}

/// Dry-air speed of sound, m/s, for a temperature in °C.
pub fn speed_of_sound(temperature_c: f64) -> Result<f64> {
    if !(temperature_c > ABSOLUTE_ZERO_C) {
        return Err(Error::Domain(format!(
            "temperature {temperature_c} °C is at or below absolute zero"
        )));
    }
    Ok(20.03 * (temperature_c - ABSOLUTE_ZERO_C).sqrt())
}

/// Shifts each sensor to where it would have been had the air been still:
/// `p_i' = p_i - (t_i - t_*) * v`. Arrival times and elevations are unchanged.
///
/// `discharge_estimate` defaults to the first arrival minus one second.
pub fn wind_correct(set: &PulseSet, env: &Environment, discharge_estimate: Option<f64>) -> Result<PulseSet> {
    env.validate()?;
    let Some(t0) = set.first_arrival() else {
        return Ok(set.clone());
    };
    let t_star = discharge_estimate.unwrap_or(t0 - DEFAULT_DISCHARGE_OFFSET);
    if !t_star.is_finite() || t_star > t0 {
        return Err(Error::Precondition(format!(
            "discharge estimate {t_star} is later than the first arrival {t0}"
        )));
    }
    let (vx, vy) = env.wind;
    set.map_observations(|o| {
        let dt = o.arrival_time - t_star;
        SensorObservation {
            position: Position {
                x: o.position.x - dt * vx,
                y: o.position.y - dt * vy,
                z: o.position.z,
            },
            ..o.clone()
        }
    })
}
