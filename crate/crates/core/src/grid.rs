//! Partition geometry and the deterministic algebra of the grid copula.
//!
//! A [`ThetaGrid`] of order `m` holds the `m x m` cell masses. It is always
//! built from the `(m-1) x (m-1)` free block; the last row, last column and the
//! corner are derived so that every row and column sums to `1/m`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell `(j, k)` (zero-based) containing `(u, v)`.
///
/// Cells are right-closed: `(j/m, (j+1)/m]`. Zero maps to the first cell.
pub fn cell_index(u: f64, v: f64, m: usize) -> Result<(usize, usize)> {
    if m < 2 {
        return Err(Error::InvalidOrder(m));
    }
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(Error::OutsideUnitSquare { u, v });
    }
    Ok((axis_index(u, m), axis_index(v, m)))
}

fn axis_index(x: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut idx = ((x * mf).ceil() as usize).clamp(1, m) - 1;
    // x*m can round across an integer; settle against the boundaries t/m as
    // computed in floating point so that i/n == t/m is decided consistently.
    while idx > 0 && x <= idx as f64 / mf {
        idx -= 1;
    }
    while idx + 1 < m && x > (idx + 1) as f64 / mf {
        idx += 1;
    }
    idx
}

/// Cell masses of a piecewise-constant copula of order `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    m: usize,
    /// Full grid, row-major, `cells[j * m + k]`.
    cells: Vec<f64>,
}

impl ThetaGrid {
    /// Completes a free block (row-major, length `(m-1)^2`) into a full grid.
    ///
    /// The result is not checked for feasibility; see [`ThetaGrid::is_feasible`].
    pub fn complete(m: usize, free: &[f64]) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        let f = m - 1;
        if free.len() != f * f {
            return Err(Error::Dimension(format!(
                "free block of order {m} needs {} entries, got {}",
                f * f,
                free.len()
            )));
        }
        if let Some(pos) = free.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let inv_m = 1.0 / m as f64;
        let mut cells = vec![0.0; m * m];
        let mut total = 0.0;
        for j in 0..f {
            let mut row = 0.0;
            for k in 0..f {
                let x = free[j * f + k];
                cells[j * m + k] = x;
                row += x;
            }
            cells[j * m + f] = inv_m - row;
            total += row;
        }
        for k in 0..f {
            let col: f64 = (0..f).map(|j| free[j * f + k]).sum();
            cells[f * m + k] = inv_m - col;
        }
        cells[f * m + f] = total - (m as f64 - 2.0) / m as f64;
        Ok(Self { m, cells })
    }

    /// Grid with every cell equal to `1/m^2`.
    pub fn independence(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        let f = m - 1;
        Self::complete(m, &vec![1.0 / (m * m) as f64; f * f])
    }

    /// Wraps a full `m x m` grid as given, without deriving the boundary.
    ///
    /// Used for histograms whose margins need not be uniform (for instance a
    /// sample copula of data that was not rank transformed).
    pub fn from_cells(m: usize, cells: Vec<f64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        if cells.len() != m * m {
            return Err(Error::Dimension(format!(
                "full grid of order {m} needs {} entries, got {}",
                m * m,
                cells.len()
            )));
        }
        if let Some(pos) = cells.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { m, cells })
    }

    /// A random strictly interior grid.
    ///
    /// Mixes the independence grid with a few random permutation grids using
    /// Dirichlet-like weights. Every cell is positive because the independence
    /// component has positive weight.
    pub fn random_interior<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        let n_perm = 1 + rng.random_range(0..4usize);
        let mut weights: Vec<f64> = (0..=n_perm)
            .map(|_| -crate::rng::open_unit(rng).ln())
            .collect();
        // keep the uniform component away from zero
        weights[0] += 0.05;
        let wsum: f64 = weights.iter().sum();
        let inv_m = 1.0 / m as f64;
        let mut cells = vec![weights[0] / wsum * inv_m * inv_m; m * m];
        for w in &weights[1..] {
            let mut perm: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                let s = rng.random_range(0..=i);
                perm.swap(i, s);
            }
            for (j, &k) in perm.iter().enumerate() {
                cells[j * m + k] += w / wsum * inv_m;
            }
        }
        let f = m - 1;
        let free: Vec<f64> = (0..f * f).map(|i| cells[(i / f) * m + i % f]).collect();
        Self::complete(m, &free)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Mass of cell `(j, k)`, zero-based over the full grid.
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.cells[j * self.m + k]
    }

    /// Full grid, row-major.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// The free `(m-1) x (m-1)` block, row-major.
    pub fn free(&self) -> Vec<f64> {
        let f = self.m - 1;
        (0..f * f)
            .map(|i| self.cells[(i / f) * self.m + i % f])
            .collect()
    }

    pub fn row_sum(&self, j: usize) -> f64 {
        self.cells[j * self.m..(j + 1) * self.m].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> f64 {
        (0..self.m).map(|j| self.get(j, k)).sum()
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// True iff every cell is strictly positive, i.e. the free block lies in
    /// the open constraint polytope.
    pub fn is_feasible(&self) -> bool {
        self.cells.iter().all(|&x| x > 0.0)
    }

    /// Closed-space feasibility: every cell nonnegative.
    pub fn is_feasible_closed(&self) -> bool {
        self.cells.iter().all(|&x| x >= 0.0)
    }

    /// Largest deviation of any row or column sum from `1/m`.
    pub fn margin_error(&self) -> f64 {
        let inv_m = 1.0 / self.m as f64;
        (0..self.m)
            .flat_map(|i| [self.row_sum(i), self.col_sum(i)])
            .map(|s| (s - inv_m).abs())
            .fold(0.0, f64::max)
    }

    /// Copula density `m^2 theta_{j,k}` at `(u, v)`.
    pub fn density(&self, u: f64, v: f64) -> Result<f64> {
        let (j, k) = cell_index(u, v, self.m)?;
        Ok((self.m * self.m) as f64 * self.get(j, k))
    }

    /// Copula CDF at `(u, v)`.
    ///
    /// On each cell the CDF is bilinear, `A + B u + D v + m^2 theta uv`, with
    /// coefficients built from partial sums of the cell masses.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        let (j, k) = cell_index(u, v, self.m)?;
        if u == 0.0 || v == 0.0 {
            return Ok(0.0);
        }
        let m = self.m as f64;
        // one-based positions
        let (jj, kk) = ((j + 1) as f64, (k + 1) as f64);
        let rect: f64 = (0..=j)
            .map(|r| self.cells[r * self.m..=r * self.m + k].iter().sum::<f64>())
            .sum();
        let row_part: f64 = self.cells[j * self.m..=j * self.m + k].iter().sum();
        let col_part: f64 = (0..=j).map(|r| self.get(r, k)).sum();
        let t = self.get(j, k);
        let a = rect - jj * row_part - kk * col_part + jj * kk * t;
        let b = m * row_part - m * kk * t;
        let d = m * col_part - m * jj * t;
        Ok(a + b * u + d * v + m * m * t * u * v)
    }

    /// Spearman's rho, `(3/m^2) (4 sum jk theta_{j,k} - (m+1)^2)` with
    /// one-based `j, k`.
    pub fn spearman_rho(&self) -> f64 {
        let m = self.m;
        let mut acc = 0.0;
        for j in 0..m {
            for k in 0..m {
                acc += ((j + 1) * (k + 1)) as f64 * self.get(j, k);
            }
        }
        let mf = m as f64;
        3.0 / (mf * mf) * (4.0 * acc - (mf + 1.0) * (mf + 1.0))
    }

    /// Mass of the rectangle `(u1, u2] x (v1, v2]` under this copula.
    pub fn rect_mass(&self, u1: f64, u2: f64, v1: f64, v2: f64) -> Result<f64> {
        Ok(self.cdf(u2, v2)? - self.cdf(u1, v2)? - self.cdf(u2, v1)? + self.cdf(u1, v1)?)
    }
}

/// Points in the unit square, each coordinate in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudoSample {
    points: Vec<(f64, f64)>,
}

impl PseudoSample {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        for &(u, v) in &points {
            if !(u > 0.0 && u <= 1.0 && v > 0.0 && v <= 1.0) {
                return Err(Error::OutsideUnitSquare { u, v });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sample Spearman correlation of the points (Pearson correlation of
    /// their within-sample ranks, ties not expected).
    pub fn spearman(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        let ru = ranks(self.points.iter().map(|p| p.0));
        let rv = ranks(self.points.iter().map(|p| p.1));
        let mean = (n as f64 + 1.0) / 2.0;
        let (mut suv, mut suu, mut svv) = (0.0, 0.0, 0.0);
        for (a, b) in ru.iter().zip(&rv) {
            let (x, y) = (a - mean, b - mean);
            suv += x * y;
            suu += x * x;
            svv += y * y;
        }
        suv / (suu * svv).sqrt()
    }
}

fn ranks(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let vals: Vec<f64> = values.collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let mut out = vec![0.0; vals.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = (rank + 1) as f64;
    }
    out
}

/// How [`rank_transform`] treats tied observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Ties are an error.
    #[default]
    Strict,
    /// Ties are broken by original position.
    Lenient,
}

/// Modified rank transform: `U_i = rank(X_i)/n`, `V_i = rank(Y_i)/n`.
pub fn rank_transform(x: &[f64], y: &[f64], ties: TieMode) -> Result<PseudoSample> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "x has {} values, y has {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidParameter(
            "rank transform needs n >= 1".into(),
        ));
    }
    let n = x.len() as f64;
    let ru = column_ranks(x, "x", ties)?;
    let rv = column_ranks(y, "y", ties)?;
    let points = ru
        .into_iter()
        .zip(rv)
        .map(|(a, b)| (a as f64 / n, b as f64 / n))
        .collect();
    PseudoSample::new(points)
}

fn column_ranks(values: &[f64], column: &'static str, ties: TieMode) -> Result<Vec<usize>> {
    if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort: equal values keep their original order
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    if ties == TieMode::Strict {
        for w in order.windows(2) {
            if values[w[0]] == values[w[1]] {
                return Err(Error::Ties {
                    column,
                    first: w[0],
                    second: w[1],
                });
            }
        }
    }
    let mut ranks = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    Ok(ranks)
}

/// Cell counts of a sample over an `m x m` partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    m: usize,
    /// Row-major `m x m`.
    r: Vec<u64>,
    n: u64,
}

impl CellCounts {
    pub fn new(m: usize, r: Vec<u64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        if r.len() != m * m {
            return Err(Error::Dimension(format!(
                "count table of order {m} needs {} entries, got {}",
                m * m,
                r.len()
            )));
        }
        let n = r.iter().sum();
        Ok(Self { m, r, n })
    }

    pub fn zeros(m: usize) -> Result<Self> {
        Self::new(m, vec![0; m * m])
    }

    /// Counts points per cell using [`cell_index`].
    pub fn from_sample(sample: &PseudoSample, m: usize) -> Result<Self> {
        let mut r = vec![0u64; m * m];
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        for &(u, v) in sample.points() {
            let (j, k) = cell_index(u, v, m)?;
            r[j * m + k] += 1;
        }
        Self::new(m, r)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, j: usize, k: usize) -> u64 {
        self.r[j * self.m + k]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.r
    }

    pub fn row_sum(&self, j: usize) -> u64 {
        self.r[j * self.m..(j + 1) * self.m].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        (0..self.m).map(|j| self.get(j, k)).sum()
    }

    /// Rows as nested vectors, for serialization.
    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.r.chunks(self.m).map(|c| c.to_vec()).collect()
    }
}

/// Shorthand for [`CellCounts::from_sample`].
pub fn cell_counts(sample: &PseudoSample, m: usize) -> Result<CellCounts> {
    CellCounts::from_sample(sample, m)
}
