//! Consecutive-pair differences solved through their normal equations.
//!
//! Differencing the range equations of neighbouring sensors (in canonical
//! arrival order) cancels the quadratic terms and leaves one linear equation
//! per pair in `(p, c t_*)`. The normal matrix of those rows is the solved
//! system, so this needs one more observation than the reference-based forms.

use nalgebra::{DMatrix, DVector};

use super::{check_conditioning, finish, lstsq, prepare, DifferenceRows, RawSolution, SolverConfig, Working};
use crate::error::Result;
use crate::geo::{Diagnostics, PulseSet, ShotSolution, SolverKind};

pub fn solve_least_squares(set: &PulseSet, cfg: &SolverConfig) -> Result<ShotSolution> {
    let cfg = cfg.with_algorithm(SolverKind::LeastSquares);
    let w = prepare(set, &cfg, cfg.constraint.dimension() + 2)?;
    let raw = solve_working(&w, &cfg)?;
    Ok(finish(set, &cfg, &w, raw))
}

pub(crate) fn solve_working(w: &Working, cfg: &SolverConfig) -> Result<RawSolution> {
    let d = w.dim;
    let m = d + 1;
    let rows = DifferenceRows::new(w);
    let mut normal = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    let mut row = vec![0.0; m];
    for (i, e) in rows.rhs.iter().enumerate() {
        row[..d].copy_from_slice(&rows.spatial[i][..d]);
        row[d] = rows.time[i];
        for r in 0..m {
            rhs[r] += row[r] * e;
            for s in 0..m {
                normal[(r, s)] += row[r] * row[s];
            }
        }
    }
    let sol = lstsq(normal.clone(), &rhs, cfg.svd_cutoff)?;
    let time_free = sol.rank == d && normal.column(d).norm() <= cfg.svd_cutoff * normal.norm();
    if time_free {
        // Simultaneous arrivals leave the time column empty; the position block
        // is still determined and the discharge time follows from the ranges.
        let spatial = lstsq(
            normal.view((0, 0), (d, d)).into_owned(),
            &rhs.rows(0, d).into_owned(),
            cfg.svd_cutoff,
        )?;
        check_conditioning(&spatial, d, cfg)?;
        let mut point = [0.0; 3];
        point[..d].copy_from_slice(spatial.x.as_slice());
        let tau_star = (0..w.len())
            .map(|i| w.times[i] - w.distance(i, &point) / w.c)
            .sum::<f64>()
            / w.len() as f64;
        return Ok(RawSolution {
            point,
            tau_star,
            condition: spatial.condition,
            diagnostics: Diagnostics::default(),
        });
    }
    check_conditioning(&sol, m, cfg)?;
    let mut point = [0.0; 3];
    point[..d].copy_from_slice(&sol.x.as_slice()[..d]);
    Ok(RawSolution {
        point,
        tau_star: sol.x[d] / w.c,
        condition: sol.condition,
        diagnostics: Diagnostics::default(),
    })
}
