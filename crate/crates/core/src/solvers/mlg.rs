//! Reference-free linear least squares in `(p, c·t_*, v/c)`.
//!
//! Each sensor contributes the row
//! `p_i · p - c t_i (c t_*) - (c/2)(v/c) = ½(|p_i|² - c² t_i²)`,
//! i.e. the receiver matrix transposed. The system is solved with a truncated
//! SVD pseudoinverse; `v = |p|² - (c t_*)²` is carried as a free error term.

use nalgebra::{DMatrix, DVector};

use super::{finish, prepare, RawSolution, SolverConfig, Working};
use crate::error::{Error, Result};
use crate::geo::{Diagnostics, PulseSet, ShotSolution, SolverKind};

pub fn solve_mlg(set: &PulseSet, cfg: &SolverConfig) -> Result<ShotSolution> {
    let cfg = cfg.with_algorithm(SolverKind::Mlg);
    let w = prepare(set, &cfg, cfg.constraint.dimension() + 2)?;
    let raw = solve_working(&w, &cfg)?;
    Ok(finish(set, &cfg, &w, raw))
}

pub(crate) fn solve_working(w: &Working, cfg: &SolverConfig) -> Result<RawSolution> {
    let (a, b) = system(w);
    let d = w.dim;
    let unknowns = d + 2;
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let tol = cfg.svd_cutoff * smax;
    let rank = s.iter().filter(|&&v| v > tol).count();
    let degenerate = |condition| Error::DegenerateGeometry { condition };
    let mut x = svd.solve(&b, tol).map_err(|_| degenerate(f64::INFINITY))?;
    let mut sorted: Vec<f64> = s.iter().copied().collect();
    sorted.sort_by(|p, q| q.total_cmp(p));
    sorted.resize(unknowns, 0.0);
    let condition = if sorted[unknowns - 1] > 0.0 {
        smax / sorted[unknowns - 1]
    } else {
        f64::INFINITY
    };

    if rank == unknowns - 1 {
        // One free direction. When it leaves the position untouched (all
        // arrivals simultaneous), the error-term identity fixes the rest.
        let reduced = smax / sorted[unknowns - 2];
        let v_t = svd.v_t.as_ref().ok_or_else(|| degenerate(condition))?;
        let k = (0..s.len()).min_by(|&i, &j| s[i].total_cmp(&s[j])).unwrap_or(0);
        let null = v_t.row(k).transpose();
        let spatial = null.rows(0, d).norm();
        if spatial > 1e-9 || reduced > cfg.max_condition {
            return Err(degenerate(condition));
        }
        x = resolve_free_time(w, &x, &null).ok_or_else(|| degenerate(condition))?;
        return Ok(raw(w, &x, reduced));
    }
    if rank < unknowns || condition > cfg.max_condition {
        return Err(degenerate(condition));
    }
    Ok(raw(w, &x, condition))
}

fn raw(w: &Working, x: &DVector<f64>, condition: f64) -> RawSolution {
    let c = w.c;
    let mut point = [0.0; 3];
    point[..w.dim].copy_from_slice(&x.as_slice()[..w.dim]);
    let ct = x[w.dim];
    let v = x[w.dim + 1] * c;
    RawSolution {
        point,
        tau_star: ct / c,
        condition,
        diagnostics: Diagnostics {
            error_term: Some(v),
            ..Diagnostics::default()
        },
    }
}

/// Moves along `null` (zero in the position block) until `v = |p|² - (c t)²`
/// holds, keeping the acausal-free root with the smaller residual.
fn resolve_free_time(w: &Working, x0: &DVector<f64>, null: &DVector<f64>) -> Option<DVector<f64>> {
    let d = w.dim;
    let c = w.c;
    let p2: f64 = x0.rows(0, d).norm_squared();
    let (ct0, nt) = (x0[d], null[d]);
    let (v0, nv) = (c * x0[d + 1], c * null[d + 1]);
    // p2 - (ct0 + λ nt)² - (v0 + λ nv) = 0
    let a2 = -nt * nt;
    let a1 = -2.0 * ct0 * nt - nv;
    let a0 = p2 - ct0 * ct0 - v0;
    let roots: Vec<f64> = if a2.abs() < 1e-300 {
        if a1 == 0.0 {
            return None;
        }
        vec![-a0 / a1]
    } else {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        vec![(-a1 + sq) / (2.0 * a2), (-a1 - sq) / (2.0 * a2)]
    };
    roots
        .into_iter()
        .map(|l| x0 + null * l)
        // The discharge precedes the first arrival.
        .filter(|x| x[d] <= 1e-9 * c)
        .map(|x| {
            let mut p = [0.0; 3];
            p[..d].copy_from_slice(&x.as_slice()[..d]);
            let r = w.rms_residual(&p, x[d] / c);
            (x, r)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(x, _)| x)
}

fn system(w: &Working) -> (DMatrix<f64>, DVector<f64>) {
    let n = w.len();
    let d = w.dim;
    let c = w.c;
    let mut a = DMatrix::zeros(n, d + 2);
    let mut b = DVector::zeros(n);
    for i in 0..n {
        for k in 0..d {
            a[(i, k)] = w.points[i][k];
        }
        let ct = c * w.times[i];
        a[(i, d)] = -ct;
        a[(i, d + 1)] = -c / 2.0;
        b[i] = 0.5 * (w.squared_norm(i) - ct * ct);
    }
    (a, b)
}
