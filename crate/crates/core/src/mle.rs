//! Maximum likelihood estimation of the cell masses from cell counts.
//!
//! The log-likelihood is `2n log m + sum r_{j,k} log theta_{j,k}` over the full
//! grid, with the boundary masses derived from the free block. It is concave
//! in the free block, so a damped Newton ascent that never leaves the open
//! constraint polytope reaches the unique interior maximizer when one exists.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellCounts, ThetaGrid};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Additive smoothing used for the starting point only.
const INIT_SMOOTHING: f64 = 0.5;

/// Behaviour when the likelihood is maximized on the boundary of the
/// parameter space (typically because some cells have zero counts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MleMode {
    /// Stay in the open space and report non-convergence at the boundary.
    #[default]
    Strict,
    /// Keep every cell at or above a floor (`1/(10n)` for the solver,
    /// `1/(2n)` for the `m = 2` closed form).
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub grid: ThetaGrid,
    pub converged: bool,
    /// Largest score component divided by `n`.
    pub score_residual: f64,
    pub iterations: usize,
    /// The estimate sits on (or was clamped near) the boundary of the space.
    pub boundary: bool,
}

/// `2n log m + sum r log theta`; `-inf` if an occupied cell has no mass.
pub fn log_likelihood(grid: &ThetaGrid, counts: &CellCounts) -> Result<f64> {
    check_orders(grid, counts)?;
    let m = grid.m();
    let mut ll = 2.0 * counts.n() as f64 * (m as f64).ln();
    for (&t, &r) in grid.cells().iter().zip(counts.as_slice()) {
        if r == 0 {
            continue;
        }
        if t <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += r as f64 * t.ln();
    }
    Ok(ll)
}

fn check_orders(grid: &ThetaGrid, counts: &CellCounts) -> Result<()> {
    if grid.m() != counts.m() {
        return Err(Error::Dimension(format!(
            "grid order {} does not match count order {}",
            grid.m(),
            counts.m()
        )));
    }
    Ok(())
}

fn ratio(r: u64, t: f64) -> f64 {
    if r == 0 {
        0.0
    } else {
        r as f64 / t
    }
}

/// Score vector over the free block:
/// `r_jk/t_jk - r_jm/t_jm - r_mk/t_mk + r_mm/t_mm`.
pub fn score(grid: &ThetaGrid, counts: &CellCounts) -> Result<Vec<f64>> {
    check_orders(grid, counts)?;
    let m = grid.m();
    let l = m - 1;
    let corner = ratio(counts.get(l, l), grid.get(l, l));
    let mut g = Vec::with_capacity(l * l);
    for j in 0..l {
        let row_end = ratio(counts.get(j, l), grid.get(j, l));
        for k in 0..l {
            g.push(
                ratio(counts.get(j, k), grid.get(j, k))
                    - row_end
                    - ratio(counts.get(l, k), grid.get(l, k))
                    + corner,
            );
        }
    }
    Ok(g)
}

fn curvature(r: u64, t: f64) -> f64 {
    if r == 0 {
        0.0
    } else {
        r as f64 / (t * t)
    }
}

/// Hessian of the log-likelihood over the free block (row-major indexing).
pub fn hessian(grid: &ThetaGrid, counts: &CellCounts) -> Result<Vec<Vec<f64>>> {
    check_orders(grid, counts)?;
    let m = grid.m();
    let l = m - 1;
    let p = l * l;
    let corner = curvature(counts.get(l, l), grid.get(l, l));
    let mut h = vec![vec![0.0; p]; p];
    for a in 0..p {
        let (j, k) = (a / l, a % l);
        for b in 0..p {
            let (j2, k2) = (b / l, b % l);
            let mut v = -corner;
            if j == j2 {
                v -= curvature(counts.get(j, l), grid.get(j, l));
            }
            if k == k2 {
                v -= curvature(counts.get(l, k), grid.get(l, k));
            }
            if a == b {
                v -= curvature(counts.get(j, k), grid.get(j, k));
            }
            h[a][b] = v;
        }
    }
    Ok(h)
}

/// Closed form for `m = 2`: `theta_11 = (r_11 + r_22) / (2n)`.
///
/// The estimate is on the boundary when all points fall on one diagonal. In
/// lenient mode it is then clamped into `[1/(2n), 1/2 - 1/(2n)]`.
pub fn mle_m2(counts: &CellCounts, mode: MleMode) -> Result<MleResult> {
    if counts.m() != 2 {
        return Err(Error::Dimension(format!(
            "closed form needs m = 2, got {}",
            counts.m()
        )));
    }
    let n = counts.n();
    if n == 0 {
        return Err(Error::InvalidParameter("no observations".into()));
    }
    let diag = counts.get(0, 0) + counts.get(1, 1);
    let mut t = diag as f64 / (2 * n) as f64;
    let boundary = diag == 0 || diag == n;
    if boundary {
        log::warn!("m = 2 estimate on the boundary of the parameter space (theta_11 = {t})");
        if mode == MleMode::Lenient {
            let eps = 1.0 / (2 * n) as f64;
            t = t.clamp(eps, 0.5 - eps);
        }
    }
    let grid = ThetaGrid::complete(2, &[t])?;
    let score_residual = if grid.is_feasible() {
        max_abs(&score(&grid, counts)?) / n as f64
    } else {
        f64::NAN
    };
    Ok(MleResult {
        grid,
        converged: !boundary,
        score_residual,
        iterations: 0,
        boundary,
    })
}

/// The sample copula of order `m`: `theta_{j,k} = r_{j,k}/n` on every cell.
///
/// No constraint is imposed, so the margins are uniform only when the counts
/// come from rank-transformed data with `m | n`.
pub fn sample_copula_estimate(counts: &CellCounts) -> Result<ThetaGrid> {
    let n = counts.n();
    if n == 0 {
        return Err(Error::InvalidParameter("no observations".into()));
    }
    let cells = counts
        .as_slice()
        .iter()
        .map(|&r| r as f64 / n as f64)
        .collect();
    ThetaGrid::from_cells(counts.m(), cells)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Smoothed sample copula, pulled toward independence until it is interior
/// (and above `floor`).
fn initial_free(counts: &CellCounts, floor: f64) -> Result<Vec<f64>> {
    let m = counts.m();
    let l = m - 1;
    let denom = counts.n() as f64 + (m * m) as f64 * INIT_SMOOTHING;
    let smooth: Vec<f64> = (0..l * l)
        .map(|i| (counts.get(i / l, i % l) as f64 + INIT_SMOOTHING) / denom)
        .collect();
    let indep = 1.0 / (m * m) as f64;
    let mut w = 1.0;
    for _ in 0..60 {
        let free: Vec<f64> = smooth.iter().map(|s| w * s + (1.0 - w) * indep).collect();
        let g = ThetaGrid::complete(m, &free)?;
        if g.cells().iter().all(|&x| x > floor) {
            return Ok(free);
        }
        w *= 0.5;
    }
    Ok(vec![indep; l * l])
}

fn admissible(grid: &ThetaGrid, floor: f64) -> bool {
    if floor > 0.0 {
        grid.cells().iter().all(|&x| x >= floor)
    } else {
        grid.is_feasible()
    }
}

/// Maximizes the log-likelihood over the open constraint polytope.
///
/// Ascent directions are Newton steps (the negative Hessian is positive
/// definite whenever every boundary count is positive) with a gradient
/// fallback; each step is halved until the iterate stays admissible and the
/// log-likelihood satisfies an Armijo increase. Convergence is declared when
/// every score component divided by `n` is below `tol`.
pub fn mle_solve(
    counts: &CellCounts,
    tol: f64,
    max_iter: usize,
    mode: MleMode,
) -> Result<MleResult> {
    let m = counts.m();
    let n = counts.n();
    if n == 0 {
        return Err(Error::InvalidParameter("no observations".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let floor = match mode {
        MleMode::Strict => 0.0,
        MleMode::Lenient => 1.0 / (10 * n) as f64,
    };
    let l = m - 1;
    let p = l * l;
    let nf = n as f64;

    let mut free = initial_free(counts, floor)?;
    let mut grid = ThetaGrid::complete(m, &free)?;
    let mut ll = log_likelihood(&grid, counts)?;
    let mut g = score(&grid, counts)?;
    let mut residual = max_abs(&g) / nf;
    let mut iterations = 0;
    let mut stalled = false;

    while residual > tol && iterations < max_iter {
        iterations += 1;
        let h = hessian(&grid, counts)?;
        let neg_h = DMatrix::from_fn(p, p, |a, b| -h[a][b]);
        let gv = DVector::from_vec(g.clone());
        let newton = neg_h.cholesky().map(|c| c.solve(&gv));
        let dir: Vec<f64> = match newton {
            Some(d) if d.dot(&gv) > 0.0 => d.iter().copied().collect(),
            _ => {
                let scale = 1.0 / (1.0 + max_abs(&g));
                g.iter().map(|x| x * scale / (m * m) as f64).collect()
            }
        };
        let slope: f64 = dir.iter().zip(&g).map(|(d, x)| d * x).sum();

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let cand: Vec<f64> = free.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            let cg = ThetaGrid::complete(m, &cand)?;
            if admissible(&cg, floor) {
                let cll = log_likelihood(&cg, counts)?;
                let rounding = 64.0 * f64::EPSILON * ll.abs().max(1.0);
                // below rounding of the log-likelihood, judge by the score instead
                let sufficient = cll >= ll + 1e-4 * step * slope
                    || ((cll - ll).abs() <= rounding
                        && max_abs(&score(&cg, counts)?) < max_abs(&g));
                if sufficient {
                    accepted = Some((cand, cg, cll));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, cg, cll)) => {
                let gain = cll - ll;
                free = cand;
                grid = cg;
                ll = cll;
                g = score(&grid, counts)?;
                residual = max_abs(&g) / nf;
                if gain.abs() < f64::EPSILON * ll.abs().max(1.0) && residual > tol {
                    // no representable progress left: pressed against the boundary
                    let min_cell = grid.cells().iter().cloned().fold(f64::INFINITY, f64::min);
                    if min_cell < 1e-6 / nf || floor > 0.0 {
                        stalled = true;
                        break;
                    }
                }
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    let converged = residual <= tol;
    let min_cell = grid.cells().iter().cloned().fold(f64::INFINITY, f64::min);
    let at_floor = floor > 0.0 && min_cell <= floor * (1.0 + 1e-9);
    let boundary = !converged && (stalled || at_floor || min_cell < 1e-6 / nf);
    if boundary {
        log::warn!("likelihood maximized on the boundary of the parameter space");
    }
    Ok(MleResult {
        grid,
        converged,
        score_residual: residual,
        iterations,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(m: usize, r: &[u64]) -> CellCounts {
        CellCounts::new(m, r.to_vec()).unwrap()
    }

    #[test]
    fn log_likelihood_examples() {
        let ind = ThetaGrid::independence(3).unwrap();
        let c = counts(3, &[3, 1, 0, 2, 5, 1, 0, 0, 7]);
        assert!(log_likelihood(&ind, &c).unwrap().abs() < 1e-12);

        let g = ThetaGrid::complete(2, &[0.3]).unwrap();
        let c = counts(2, &[1, 0, 0, 0]);
        let expect = 2.0 * 2f64.ln() + 0.3f64.ln();
        assert!((log_likelihood(&g, &c).unwrap() - expect).abs() < 1e-12);

        let c = CellCounts::zeros(2).unwrap();
        assert_eq!(log_likelihood(&g, &c).unwrap(), 0.0);

        let edge = ThetaGrid::complete(2, &[0.5]).unwrap();
        let c = counts(2, &[1, 1, 0, 0]);
        assert_eq!(log_likelihood(&edge, &c).unwrap(), f64::NEG_INFINITY);
        // zero-count cells with zero mass contribute nothing
        let c = counts(2, &[1, 0, 0, 1]);
        assert!(log_likelihood(&edge, &c).unwrap().is_finite());
    }

    #[test]
    fn m2_closed_form_examples() {
        let r = mle_m2(&counts(2, &[20, 30, 30, 20]), MleMode::Strict).unwrap();
        assert!((r.grid.get(0, 0) - 0.2).abs() < 1e-15);
        assert!(r.converged && !r.boundary);
        assert!(r.score_residual < 1e-12);

        let r = mle_m2(&counts(2, &[50, 50, 50, 50]), MleMode::Strict).unwrap();
        assert!((r.grid.get(0, 0) - 0.25).abs() < 1e-15);

        let r = mle_m2(&counts(2, &[30, 20, 20, 30]), MleMode::Strict).unwrap();
        assert!((r.grid.get(0, 0) - 0.3).abs() < 1e-15);

        let r = mle_m2(&counts(2, &[10, 0, 0, 10]), MleMode::Strict).unwrap();
        assert!(r.boundary && !r.converged);
        assert_eq!(r.grid.get(0, 0), 0.5);
        let r = mle_m2(&counts(2, &[10, 0, 0, 10]), MleMode::Lenient).unwrap();
        assert!(r.boundary);
        assert!((r.grid.get(0, 0) - (0.5 - 1.0 / 40.0)).abs() < 1e-15);
        assert!(r.grid.is_feasible());

        assert!(mle_m2(&counts(3, &[1; 9]), MleMode::Strict).is_err());
        assert!(mle_m2(&CellCounts::zeros(2).unwrap(), MleMode::Strict).is_err());
    }

    #[test]
    fn m2_closed_form_matches_grid_search() {
        // 1-D lattice search over (0, 1/2) at resolution 1e-5
        for r in [
            [30u64, 20, 20, 30],
            [20, 30, 30, 20],
            [7, 1, 3, 9],
            [1, 12, 8, 2],
        ] {
            let c = counts(2, &r);
            let mut best = (f64::NEG_INFINITY, 0.0);
            for i in 1..50_000 {
                let t = i as f64 * 1e-5;
                let g = ThetaGrid::complete(2, &[t]).unwrap();
                let ll = log_likelihood(&g, &c).unwrap();
                if ll > best.0 {
                    best = (ll, t);
                }
            }
            let closed = mle_m2(&c, MleMode::Strict).unwrap().grid.get(0, 0);
            assert!(
                (closed - best.1).abs() < 2e-5,
                "{r:?}: {closed} vs {}",
                best.1
            );
        }
    }

    #[test]
    fn sample_copula_examples() {
        let g = sample_copula_estimate(&counts(2, &[1, 0, 0, 1])).unwrap();
        assert_eq!(g.cells(), &[0.5, 0.0, 0.0, 0.5]);
        let g = sample_copula_estimate(&counts(3, &[4; 9])).unwrap();
        assert!(g.cells().iter().all(|&x| (x - 1.0 / 9.0).abs() < 1e-15));
        assert!(sample_copula_estimate(&CellCounts::zeros(3).unwrap()).is_err());
    }

    #[test]
    fn solver_agrees_with_closed_form() {
        let c = counts(2, &[20, 30, 30, 20]);
        let r = mle_solve(&c, DEFAULT_TOL, DEFAULT_MAX_ITER, MleMode::Strict).unwrap();
        assert!(r.converged);
        assert!((r.grid.get(0, 0) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn solver_reduces_to_sample_copula_for_balanced_counts() {
        // margins of 10 each: what rank data with n = 30, m = 3 produce
        let r = [5, 2, 3, 1, 6, 3, 4, 2, 4];
        let c = counts(3, &r);
        let res = mle_solve(&c, DEFAULT_TOL, DEFAULT_MAX_ITER, MleMode::Strict).unwrap();
        assert!(res.converged);
        for (t, &x) in res.grid.cells().iter().zip(&r) {
            assert!((t - x as f64 / 30.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_counts_on_boundary() {
        let c = counts(2, &[10, 0, 0, 10]);
        let s = mle_solve(&c, DEFAULT_TOL, 200, MleMode::Strict).unwrap();
        assert!(!s.converged);
        assert!(s.boundary);
        assert!(s.grid.is_feasible());
        let l = mle_solve(&c, DEFAULT_TOL, 200, MleMode::Lenient).unwrap();
        assert!(l.boundary);
        let floor = 1.0 / 200.0;
        assert!(l.grid.cells().iter().all(|&x| x >= floor * (1.0 - 1e-12)));
        assert!((l.grid.get(0, 1) - floor).abs() < 1e-6);
    }

    #[test]
    fn score_and_hessian_match_finite_differences() {
        let c = counts(3, &[5, 2, 3, 1, 6, 3, 4, 2, 4]);
        let free = [0.12, 0.1, 0.08, 0.15];
        let g0 = ThetaGrid::complete(3, &free).unwrap();
        let s = score(&g0, &c).unwrap();
        let h = hessian(&g0, &c).unwrap();
        let eps = 1e-6;
        for a in 0..4 {
            let mut hi = free;
            let mut lo = free;
            hi[a] += eps;
            lo[a] -= eps;
            let ghi = ThetaGrid::complete(3, &hi).unwrap();
            let glo = ThetaGrid::complete(3, &lo).unwrap();
            let fd = (log_likelihood(&ghi, &c).unwrap() - log_likelihood(&glo, &c).unwrap())
                / (2.0 * eps);
            assert!((fd - s[a]).abs() < 1e-5 * (1.0 + s[a].abs()));
            let shi = score(&ghi, &c).unwrap();
            let slo = score(&glo, &c).unwrap();
            for b in 0..4 {
                let fd = (shi[b] - slo[b]) / (2.0 * eps);
                assert!((fd - h[a][b]).abs() < 1e-4 * (1.0 + h[a][b].abs()));
            }
        }
    }
}
