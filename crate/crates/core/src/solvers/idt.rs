//! Iterative discharge time.
//!
//! For a fixed discharge time the ranges `c (t_i - t_*)` are known and the
//! consecutive-difference rows become linear in `p` alone (intersecting
//! circles or spheres). An outer one-dimensional Nelder–Mead search moves
//! `t_*` to minimise the RMS arrival residual.

use nalgebra::{DMatrix, DVector};

use super::{check_conditioning, finish, prepare, DifferenceRows, LinearSolve, RawSolution, SolverConfig, Working};
use crate::error::{Error, Result};
use crate::geo::{Diagnostics, PulseSet, ShotSolution, SolverKind};

pub fn solve_idt(set: &PulseSet, cfg: &SolverConfig) -> Result<ShotSolution> {
    let cfg = cfg.with_algorithm(SolverKind::Idt);
    let w = prepare(set, &cfg, cfg.constraint.dimension() + 2)?;
    let raw = solve_working(&w, &cfg)?;
    Ok(finish(set, &cfg, &w, raw))
}

/// Grid intervals of the global check on the discharge-time objective.
const SCAN_POINTS: usize = 1024;

/// Grid minima from which the simplex is restarted.
const RESTARTS: usize = 8;

/// Position solve for a known discharge time, reused by every objective evaluation.
struct CircleSolver {
    dim: usize,
    /// Pseudoinverse of the normal matrix.
    inverse: DMatrix<f64>,
    /// `Σ r e` and `Σ r d`, so the right-hand side is `h0 - (c τ_*) h1`.
    h0: DVector<f64>,
    h1: DVector<f64>,
    condition: f64,
}

impl CircleSolver {
    fn new(w: &Working, cfg: &SolverConfig) -> Result<Self> {
        let d = w.dim;
        let rows = DifferenceRows::new(w);
        let mut normal = DMatrix::zeros(d, d);
        let mut h0 = DVector::zeros(d);
        let mut h1 = DVector::zeros(d);
        for i in 0..rows.rhs.len() {
            let r = &rows.spatial[i];
            for a in 0..d {
                h0[a] += r[a] * rows.rhs[i];
                h1[a] += r[a] * rows.time[i];
                for b in 0..d {
                    normal[(a, b)] += r[a] * r[b];
                }
            }
        }
        let svd = normal.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let tol = cfg.svd_cutoff * smax;
        let stats = LinearSolve {
            x: DVector::zeros(d),
            rank: svd.singular_values.iter().filter(|&&s| s > tol).count(),
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        };
        check_conditioning(&stats, d, cfg)?;
        let inverse = svd.pseudo_inverse(tol).map_err(|_| Error::DegenerateGeometry {
            condition: stats.condition,
        })?;
        Ok(Self {
            dim: d,
            inverse,
            h0,
            h1,
            condition: stats.condition,
        })
    }

    fn position(&self, ct_star: f64) -> [f64; 3] {
        let rhs = &self.h0 - &self.h1 * ct_star;
        let p = &self.inverse * rhs;
        let mut out = [0.0; 3];
        out[..self.dim].copy_from_slice(p.as_slice());
        out
    }
}

/// Result of a bracketed one-dimensional minimisation.
struct Minimum {
    x: f64,
    iterations: usize,
}

/// Nelder–Mead on a line: a two-vertex simplex with reflection, expansion,
/// contraction and shrink. Stops when the vertices are closer than `xtol`.
fn nelder_mead_1d<F: FnMut(f64) -> f64>(mut f: F, x0: f64, step: f64, xtol: f64, max_iter: usize) -> Result<Minimum> {
    let (mut best, mut worst) = ((x0, f(x0)), (x0 + step, f(x0 + step)));
    for iter in 0..max_iter {
        if worst.1 < best.1 {
            std::mem::swap(&mut best, &mut worst);
        }
        if (worst.0 - best.0).abs() < xtol {
            return Ok(Minimum {
                x: best.0,
                iterations: iter,
            });
        }
        let xr = best.0 + (best.0 - worst.0);
        let fr = f(xr);
        if fr < best.1 {
            let xe = best.0 + 2.0 * (best.0 - worst.0);
            let fe = f(xe);
            worst = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < worst.1 {
            let xc = best.0 + 0.5 * (xr - best.0);
            let fc = f(xc);
            worst = if fc <= fr { (xc, fc) } else { (xr, fr) };
        } else {
            let xc = best.0 + 0.5 * (worst.0 - best.0);
            let fc = f(xc);
            // Contraction and shrink coincide on a line.
            worst = (xc, fc);
        }
    }
    Err(Error::NoConvergence { iterations: max_iter })
}

pub(crate) fn solve_working(w: &Working, cfg: &SolverConfig) -> Result<RawSolution> {
    let c = w.c;
    let circles = CircleSolver::new(w, cfg)?;

    // τ_* is measured from the first arrival; the first sensor's range is -c τ_*.
    let (lo, hi) = match cfg.idt_range_bounds {
        Some((min_range, max_range)) => (-max_range / c, -min_range / c),
        None => (f64::NEG_INFINITY, 0.0),
    };
    let clamp = |tau: f64| tau.clamp(lo, hi);
    let objective = |tau: f64| {
        let t = clamp(tau);
        let p = circles.position(c * t);
        // Outside the admissible interval the penalty keeps the simplex moving back in.
        w.rms_residual(&p, t) + (tau - t).abs()
    };

    let xtol = cfg.convergence_tol / c;
    let x0 = clamp(-cfg.idt_initial_offset);
    let step = (0.1 * cfg.idt_initial_offset).max(1e-3);
    let step = if x0 + step > hi { -step } else { step };
    let mut min = nelder_mead_1d(objective, x0, step, xtol, cfg.max_iterations)?;

    // The objective is not convex for every geometry. A scan over ranges up
    // to twice the array span finds the basins the descent may have missed;
    // the simplex is restarted from the lowest grid minima.
    let span = (0..w.len()).map(|i| w.squared_norm(i).sqrt()).fold(0.0, f64::max) * 2.0;
    let scan_lo = (-(2.0 * span).max(cfg.idt_initial_offset * c) / c).max(lo);
    let scan_hi = hi.min(0.0);
    if scan_lo < scan_hi {
        let spacing = (scan_hi - scan_lo) / SCAN_POINTS as f64;
        let grid: Vec<(f64, f64)> = (0..=SCAN_POINTS)
            .map(|k| scan_lo + spacing * k as f64)
            .map(|tau| (tau, objective(tau)))
            .collect();
        let mut minima: Vec<(f64, f64)> = (0..grid.len())
            .filter(|&k| {
                let f = grid[k].1;
                (k == 0 || grid[k - 1].1 >= f) && (k + 1 == grid.len() || grid[k + 1].1 >= f)
            })
            .map(|k| grid[k])
            .collect();
        minima.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut best_f = objective(min.x);
        for &(tau, _) in minima.iter().take(RESTARTS) {
            let step = if tau + spacing > hi { -spacing } else { spacing };
            let again = nelder_mead_1d(objective, tau, step, xtol, cfg.max_iterations)?;
            let f = objective(again.x);
            if f < best_f {
                best_f = f;
                min = Minimum {
                    x: again.x,
                    iterations: min.iterations + again.iterations,
                };
            }
        }
    }

    let tau_star = clamp(min.x);
    let range_bound_active =
        cfg.idt_range_bounds.is_some() && ((tau_star - lo).abs() <= xtol || (tau_star - hi).abs() <= xtol);
    Ok(RawSolution {
        point: circles.position(c * tau_star),
        tau_star,
        condition: circles.condition,
        diagnostics: Diagnostics {
            iterations: Some(min.iterations),
            range_bound_active,
            ..Diagnostics::default()
        },
    })
}
