//! Independent forward model and scenario builders shared by the integration tests.
#![allow(dead_code)]

use gunloc_core::{Position, PulseSet, SensorObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Straight-line travel time, written out independently of the library.
pub fn arrival(src: &Position, t_star: f64, sensor: &Position, c: f64, horizontal: bool) -> f64 {
    let dz = if horizontal { 0.0 } else { sensor.z - src.z };
    let d = ((sensor.x - src.x).powi(2) + (sensor.y - src.y).powi(2) + dz * dz).sqrt();
    t_star + d / c
}

/// A noise-free synthetic instance.
pub struct Instance {
    pub sensors: Vec<Position>,
    pub source: Position,
    pub t_star: f64,
    pub c: f64,
}

impl Instance {
    /// `n` sensors uniform over a 1 km square (elevations in `[0, z_span]`)
    /// and a source drawn as a random convex combination of the sensors, so
    /// it lies inside their hull.
    pub fn random(r: &mut ChaCha8Rng, n: usize, z_span: f64) -> Self {
        let sensors: Vec<Position> = (0..n)
            .map(|_| {
                Position::new(
                    r.random_range(0.0..1000.0),
                    r.random_range(0.0..1000.0),
                    if z_span > 0.0 { r.random_range(0.0..z_span) } else { 0.0 },
                )
            })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| -r.random_range(1e-6f64..1.0).ln()).collect();
        let total: f64 = w.iter().sum();
        let mut source = Position::new(0.0, 0.0, 0.0);
        for (p, wi) in sensors.iter().zip(&w) {
            source.x += p.x * wi / total;
            source.y += p.y * wi / total;
            source.z += p.z * wi / total;
        }
        Self {
            sensors,
            source,
            t_star: r.random_range(0.0..1000.0),
            c: r.random_range(320.0..350.0),
        }
    }

    pub fn pulse_set(&self, horizontal: bool) -> PulseSet {
        self.pulse_set_with(horizontal, |_| 0.0)
    }

    /// Arrivals with a per-sensor perturbation added.
    pub fn pulse_set_with(&self, horizontal: bool, mut extra: impl FnMut(usize) -> f64) -> PulseSet {
        let obs = self
            .sensors
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let t = arrival(&self.source, self.t_star, p, self.c, horizontal) + extra(i);
                SensorObservation::new(format!("s{i:02}"), *p, t)
            })
            .collect();
        PulseSet::new("synthetic", obs).unwrap()
    }
}

/// Gaussian draw by Box-Muller so the tests do not lean on the library's RNG plumbing.
pub fn gaussian(r: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random();
    sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Friedlander-like blast, `A (1 - t/T) e^{-t/T}` with `T` = 2 ms, starting at `onset` seconds.
pub fn impulse(samples: &mut [f64], fs: f64, onset: f64, amplitude: f64) {
    let start = (onset * fs).round() as usize;
    for (k, s) in samples.iter_mut().enumerate().skip(start) {
        let t = (k - start) as f64 / fs;
        if t > 0.05 {
            break;
        }
        *s += amplitude * (1.0 - t / 0.002) * (-t / 0.002).exp();
    }
}
