//! Spatial beta-process prior on the free cell masses.
//!
//! Three levels, all on the `(m-1) x (m-1)` free lattice:
//!
//! ```text
//! omega            ~ Be(a, b)
//! eta_{j,k} | omega ~ Bin(c_{j,k}, omega)
//! theta_{j,k} | eta ~ Be(a + sum_N eta, b + sum_N (c - eta))
//! ```
//!
//! where `N` is the edge-sharing neighbourhood of `(j, k)` including the cell
//! itself, truncated at the lattice edges. Each `theta_{j,k}` is marginally
//! `Be(a, b)`; neighbouring cells are positively correlated through shared
//! latents and all cells through `omega`.
//!
//! The prior lives on `(0, 1)` per cell and does not enforce the margin
//! constraints of a [`ThetaGrid`](crate::ThetaGrid); the posterior adds them.

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::ThetaGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbepConfig {
    m: usize,
    a: f64,
    b: f64,
    /// Binomial sizes on the free lattice, row-major `(m-1)^2`.
    c: Vec<u32>,
}

impl SbepConfig {
    pub fn new(m: usize, a: f64, b: f64, c: Vec<u32>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "shapes must be positive, got a = {a}, b = {b}"
            )));
        }
        let l = m - 1;
        if c.len() != l * l {
            return Err(Error::Dimension(format!(
                "c grid of order {m} needs {} entries, got {}",
                l * l,
                c.len()
            )));
        }
        Ok(Self { m, a, b, c })
    }

    /// Same `c` on every free cell.
    pub fn uniform(m: usize, a: f64, b: f64, c: u32) -> Result<Self> {
        let l = m.saturating_sub(1);
        Self::new(m, a, b, vec![c; l * l])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> &[u32] {
        &self.c
    }

    pub fn c_at(&self, j: usize, k: usize) -> u32 {
        self.c[j * (self.m - 1) + k]
    }

    /// Side of the free lattice, `m - 1`.
    pub fn lattice(&self) -> usize {
        self.m - 1
    }

    /// Sum of `c` over the neighbourhood of `(j, k)`.
    pub fn neighbor_c_sum(&self, j: usize, k: usize) -> u32 {
        neighbors_unchecked(j, k, self.lattice())
            .map(|(r, s)| self.c_at(r, s))
            .sum()
    }

    /// Beta shapes of `theta_{j,k}` given the latents.
    pub fn beta_shapes(&self, eta: &[u32], j: usize, k: usize) -> (f64, f64) {
        let l = self.lattice();
        let (mut e, mut rest) = (0u32, 0u32);
        for (r, s) in neighbors_unchecked(j, k, l) {
            let i = r * l + s;
            e += eta[i];
            rest += self.c[i] - eta[i];
        }
        (self.a + e as f64, self.b + rest as f64)
    }

    /// Whether every `c_{j,k}` respects the `c <= sqrt(n)/5` guidance for a
    /// sample of size `n`. Larger values let the latents overwhelm the data.
    pub fn within_data_guidance(&self, n: u64) -> bool {
        let cap = (n as f64).sqrt() / 5.0;
        self.c.iter().all(|&c| c as f64 <= cap)
    }
}

/// Latent layer of the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    /// Row-major over the free lattice, `0 <= eta <= c`.
    pub eta: Vec<u32>,
    pub omega: f64,
}

impl LatentState {
    pub fn is_valid(&self, config: &SbepConfig) -> bool {
        self.eta.len() == config.c.len()
            && self.eta.iter().zip(&config.c).all(|(e, c)| e <= c)
            && self.omega > 0.0
            && self.omega < 1.0
    }
}

fn neighbors_unchecked(j: usize, k: usize, l: usize) -> impl Iterator<Item = (usize, usize)> {
    let cand = [
        Some((j, k)),
        j.checked_sub(1).map(|r| (r, k)),
        (j + 1 < l).then_some((j + 1, k)),
        k.checked_sub(1).map(|s| (j, s)),
        (k + 1 < l).then_some((j, k + 1)),
    ];
    cand.into_iter().flatten()
}

fn check_free_index(j: usize, k: usize, m: usize) -> Result<()> {
    if m < 2 || j + 1 >= m || k + 1 >= m {
        return Err(Error::IndexOutOfRange { j, k, m });
    }
    Ok(())
}

/// Edge-sharing neighbourhood of free cell `(j, k)`, the cell included.
///
/// Interior cells have five members, edge cells four and corners three.
pub fn neighbors(j: usize, k: usize, m: usize) -> Result<Vec<(usize, usize)>> {
    check_free_index(j, k, m)?;
    Ok(neighbors_unchecked(j, k, m - 1).collect())
}

/// Cells whose neighbourhood contains `(j, k)`.
pub fn reversed_neighbors(j: usize, k: usize, m: usize) -> Result<Vec<(usize, usize)>> {
    check_free_index(j, k, m)?;
    let l = m - 1;
    let mut out = Vec::new();
    for t in 0..l {
        for s in 0..l {
            if neighbors_unchecked(t, s, l).any(|p| p == (j, k)) {
                out.push((t, s));
            }
        }
    }
    Ok(out)
}

/// One joint draw from the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDraw {
    /// Free block, row-major; not constrained to the parameter space.
    pub free: Vec<f64>,
    pub latent: LatentState,
    /// Whether the completed grid is strictly feasible.
    pub feasible: bool,
}

pub fn sample_prior<R: Rng + ?Sized>(config: &SbepConfig, rng: &mut R) -> Result<PriorDraw> {
    let omega = Beta::new(config.a, config.b)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng);
    let eta: Vec<u32> = config
        .c
        .iter()
        .map(|&c| {
            if c == 0 {
                Ok(0)
            } else {
                Binomial::new(c as u64, omega)
                    .map(|d| d.sample(rng) as u32)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))
            }
        })
        .collect::<Result<_>>()?;
    let l = config.lattice();
    let mut free = Vec::with_capacity(l * l);
    for j in 0..l {
        for k in 0..l {
            let (alpha, beta) = config.beta_shapes(&eta, j, k);
            let d = Beta::new(alpha, beta).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            free.push(d.sample(rng));
        }
    }
    let feasible = ThetaGrid::complete(config.m, &free)?.is_feasible();
    Ok(PriorDraw {
        free,
        latent: LatentState { eta, omega },
        feasible,
    })
}

/// Prior draws conditioned on landing inside the parameter space, by plain
/// rejection. A visualization aid for prior-predictive grids; the model
/// itself never conditions the prior this way. Returns `None` when no draw
/// is accepted within `max_tries`.
pub fn sample_prior_feasible<R: Rng + ?Sized>(
    config: &SbepConfig,
    rng: &mut R,
    max_tries: usize,
) -> Result<Option<PriorDraw>> {
    for _ in 0..max_tries {
        let d = sample_prior(config, rng)?;
        if d.feasible {
            return Ok(Some(d));
        }
    }
    Ok(None)
}

/// Prior correlation between two free cells.
///
/// `((a+b) S_common + S_1 S_2) / ((a+b+S_1)(a+b+S_2))` with `S_i` the sum of
/// `c` over each neighbourhood and `S_common` over their intersection. The
/// formula is for distinct cells; a cell with itself gives 1.
pub fn prior_correlation(
    config: &SbepConfig,
    first: (usize, usize),
    second: (usize, usize),
) -> Result<f64> {
    check_free_index(first.0, first.1, config.m)?;
    check_free_index(second.0, second.1, config.m)?;
    if first == second {
        return Ok(1.0);
    }
    let l = config.lattice();
    let n1: Vec<_> = neighbors_unchecked(first.0, first.1, l).collect();
    let n2: Vec<_> = neighbors_unchecked(second.0, second.1, l).collect();
    let s1: f64 = n1.iter().map(|&(r, s)| config.c_at(r, s) as f64).sum();
    let s2: f64 = n2.iter().map(|&(r, s)| config.c_at(r, s) as f64).sum();
    let common: f64 = n1
        .iter()
        .filter(|p| n2.contains(p))
        .map(|&(r, s)| config.c_at(r, s) as f64)
        .sum();
    let ab = config.a + config.b;
    Ok((ab * common + s1 * s2) / ((ab + s1) * (ab + s2)))
}

pub(crate) fn ln_beta_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() + ln_gamma(alpha + beta)
        - ln_gamma(alpha)
        - ln_gamma(beta)
}

pub(crate) fn ln_binomial_pmf(k: u32, n: u32, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let (kf, nf) = (k as f64, n as f64);
    let coef = ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
    let mut out = coef;
    if k > 0 {
        out += kf * p.ln();
    }
    if k < n {
        out += (nf - kf) * (-p).ln_1p();
    }
    out
}

/// Joint log density of `(theta, eta, omega)` under the prior.
pub fn log_prior_density(free: &[f64], latent: &LatentState, config: &SbepConfig) -> f64 {
    let l = config.lattice();
    if free.len() != l * l || !latent.is_valid(config) {
        return f64::NEG_INFINITY;
    }
    let mut acc = ln_beta_pdf(latent.omega, config.a, config.b);
    for j in 0..l {
        for k in 0..l {
            let i = j * l + k;
            let (alpha, beta) = config.beta_shapes(&latent.eta, j, k);
            acc += ln_beta_pdf(free[i], alpha, beta);
            acc += ln_binomial_pmf(latent.eta[i], config.c[i], latent.omega);
        }
    }
    acc
}
