//! Reference-sensor formulation.
//!
//! With the earliest sensor moved to the origin and `R` the source range from
//! it, every other sensor satisfies
//! `2 q_i · p + 2 c τ_i R = |q_i|² - c² τ_i²`.
//! Solving for `p` as a function of `R` (`p = α - R β`) and imposing
//! `|p| = R` leaves a quadratic in `R`.

use nalgebra::{DMatrix, DVector};

use super::{check_conditioning, finish, lstsq, prepare, RawSolution, SolverConfig, Working};
use crate::error::{Error, Result};
use crate::geo::{Diagnostics, PulseSet, ShotSolution, SolverKind};

/// Two roots whose RMS residuals differ by less than this fraction are indistinguishable.
const AMBIGUITY_RATIO: f64 = 0.10;
/// Residual floor below which two roots are both considered exact, seconds.
const AMBIGUITY_FLOOR: f64 = 1e-9;

/// Requires `d + 1` observations; with exactly `d + 1` an indistinguishable
/// second root is reported as [`Error::AmbiguousSolution`].
pub fn solve_reddi(set: &PulseSet, cfg: &SolverConfig) -> Result<ShotSolution> {
    let cfg = cfg.with_algorithm(SolverKind::Reddi);
    let d = cfg.constraint.dimension();
    let w = prepare(set, &cfg, d + 1)?;
    let raw = solve_working(&w, &cfg, set.len() == d + 1)?;
    Ok(finish(set, &cfg, &w, raw))
}

struct Candidate {
    point: [f64; 3],
    tau_star: f64,
    rms: f64,
}

pub(crate) fn solve_working(w: &Working, cfg: &SolverConfig, exactly_determined: bool) -> Result<RawSolution> {
    let d = w.dim;
    let c = w.c;
    let n = w.len();
    // Reference is the first (earliest) row; it has τ = 0.
    let reference = w.points[0];
    let q: Vec<[f64; 3]> = w
        .points
        .iter()
        .map(|p| [p[0] - reference[0], p[1] - reference[1], p[2] - reference[2]])
        .collect();

    let rows = n - 1;
    let mut a = DMatrix::zeros(rows, d);
    let mut b = DVector::zeros(rows);
    let mut g = DVector::zeros(rows);
    for i in 1..n {
        let tau = w.times[i] - w.times[0];
        let qn: f64 = q[i][..d].iter().map(|v| v * v).sum();
        for k in 0..d {
            a[(i - 1, k)] = 2.0 * q[i][k];
        }
        b[i - 1] = qn - c * c * tau * tau;
        g[i - 1] = 2.0 * c * tau;
    }

    let alpha = lstsq(a.clone(), &b, cfg.svd_cutoff)?;
    check_conditioning(&alpha, d, cfg)?;
    let beta = lstsq(a, &g, cfg.svd_cutoff)?;
    let (alpha, condition) = (alpha.x, alpha.condition);
    let beta = beta.x;

    let a2 = beta.dot(&beta) - 1.0;
    let a1 = -2.0 * alpha.dot(&beta);
    let a0 = alpha.dot(&alpha);
    let roots = quadratic_roots(a2, a1, a0).ok_or(Error::DegenerateGeometry { condition })?;

    let mut candidates: Vec<Candidate> = roots
        .into_iter()
        .filter(|r| *r >= 0.0 && r.is_finite())
        .map(|range| {
            let mut local = [0.0; 3];
            for k in 0..d {
                local[k] = alpha[k] - range * beta[k];
            }
            let point = [
                local[0] + reference[0],
                local[1] + reference[1],
                local[2] + reference[2],
            ];
            // Discharge time is the mean of t_i - S_i / c at the candidate.
            let tau_star = (0..n).map(|i| w.times[i] - w.distance(i, &point) / c).sum::<f64>() / n as f64;
            let rms = w.rms_residual(&point, tau_star);
            Candidate { point, tau_star, rms }
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::DegenerateGeometry { condition });
    }
    candidates.sort_by(|x, y| x.rms.total_cmp(&y.rms));
    if exactly_determined && candidates.len() == 2 {
        let (lo, hi) = (candidates[0].rms, candidates[1].rms);
        if hi - lo <= AMBIGUITY_RATIO * hi + AMBIGUITY_FLOOR {
            return Err(Error::AmbiguousSolution { first: lo, second: hi });
        }
    }
    let best = &candidates[0];
    Ok(RawSolution {
        point: best.point,
        tau_star: best.tau_star,
        condition,
        diagnostics: Diagnostics::default(),
    })
}

/// Real roots of `a2 x² + a1 x + a0`, tolerating round-off that pushes a
/// double root's discriminant slightly negative.
fn quadratic_roots(a2: f64, a1: f64, a0: f64) -> Option<Vec<f64>> {
    let scale = a1.abs().max(a2.abs()).max(a0.abs());
    if a2.abs() <= 1e-12 * scale {
        if a1 == 0.0 {
            return None;
        }
        return Some(vec![-a0 / a1]);
    }
    let mut disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 {
        if disc > -1e-9 * (a1 * a1).max((4.0 * a2 * a0).abs()) {
            disc = 0.0;
        } else {
            return None;
        }
    }
    // Numerically stable form.
    let sq = disc.sqrt();
    let qv = -0.5 * (a1 + a1.signum() * sq);
    if qv == 0.0 {
        return Some(vec![0.0]);
    }
    let r1 = qv / a2;
    let r2 = a0 / qv;
    Some(if disc == 0.0 { vec![r1] } else { vec![r1, r2] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_roots_basic() {
        let mut r = quadratic_roots(1.0, -3.0, 2.0).unwrap();
        r.sort_by(f64::total_cmp);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_none());
        assert_eq!(quadratic_roots(0.0, 2.0, -4.0).unwrap(), vec![2.0]);
    }
}
