//! Gibbs sampler for the grid copula under the spatial beta-process prior.
//!
//! One sweep updates, in this order:
//!
//! 1. every free `theta_{j,k}` (row-major) by a truncated random-walk
//!    Metropolis-Hastings step on its conditional support `(l, u)`;
//! 2. every latent `eta_{j,k}` by enumerating its finite support;
//! 3. `omega` from its conjugate Beta conditional.
//!
//! The chain starts at the independence grid with `eta = 0` and
//! `omega = a/(a+b)`. Given the seed the output is bit-for-bit reproducible.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{CellCounts, ThetaGrid};
use crate::prior::{LatentState, SbepConfig};
use crate::rng::{substream, StreamRng};

/// Proposal windows are kept this far inside the conditional support so that
/// boundary masses recomputed in a different summation order stay positive.
const SUPPORT_PAD: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Random-walk half-width as a fraction of the support length.
    pub delta: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 500,
            thin: 2,
            delta: 0.25,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidParameter(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Number of draws a chain with this schedule stores.
    pub fn stored_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// One stored state of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub sweep: usize,
    pub omega: f64,
    pub eta: Vec<u32>,
    /// Free block, row-major.
    pub theta: Vec<f64>,
}

impl Draw {
    pub fn grid(&self, m: usize) -> Result<ThetaGrid> {
        ThetaGrid::complete(m, &self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub m: usize,
    pub draws: Vec<Draw>,
    /// Accepted MH proposals per free cell, over all sweeps.
    pub accepted: Vec<u64>,
    /// MH proposals per free cell, over all sweeps.
    pub proposed: Vec<u64>,
    pub config: McmcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub pooled: f64,
    /// Rows of the free lattice.
    pub per_cell: Vec<Vec<f64>>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn grids(&self) -> Result<Vec<ThetaGrid>> {
        self.draws.iter().map(|d| d.grid(self.m)).collect()
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    pub fn pooled_acceptance(&self) -> f64 {
        let a: u64 = self.accepted.iter().sum();
        let p: u64 = self.proposed.iter().sum();
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }

    pub fn acceptance_summary(&self) -> AcceptanceSummary {
        let l = self.m - 1;
        AcceptanceSummary {
            pooled: self.pooled_acceptance(),
            per_cell: self
                .acceptance_rates()
                .chunks(l)
                .map(|c| c.to_vec())
                .collect(),
        }
    }

    /// Columnar CSV: `sweep,omega,eta_j_k...,theta_j_k...` with one-based
    /// labels and one row per stored draw.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let l = self.m - 1;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sweep".to_string(), "omega".to_string()];
        for prefix in ["eta", "theta"] {
            for j in 0..l {
                for k in 0..l {
                    header.push(format!("{prefix}_{}_{}", j + 1, k + 1));
                }
            }
        }
        w.write_record(&header)?;
        for d in &self.draws {
            let mut row = Vec::with_capacity(header.len());
            row.push(d.sweep.to_string());
            row.push(format!("{:?}", d.omega));
            row.extend(d.eta.iter().map(|e| e.to_string()));
            row.extend(d.theta.iter().map(|t| format!("{t:?}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads draws written by [`Chain::write_csv`]. Acceptance counts are not
    /// part of the file and come back as zeros; `config` is the default.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let n_eta = header.iter().filter(|h| h.starts_with("eta_")).count();
        let n_theta = header.iter().filter(|h| h.starts_with("theta_")).count();
        let l = (n_theta as f64).sqrt().round() as usize;
        if n_eta != n_theta || l * l != n_theta || l == 0 || header.len() != 2 + 2 * n_theta {
            return Err(Error::ChainFormat(format!(
                "unexpected header with {} columns",
                header.len()
            )));
        }
        let mut draws = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::ChainFormat(format!("row {}: bad {what}", line + 2));
            let sweep = rec[0].parse().map_err(|_| bad("sweep"))?;
            let omega = rec[1].parse().map_err(|_| bad("omega"))?;
            let eta = (2..2 + n_eta)
                .map(|i| rec[i].parse().map_err(|_| bad("eta")))
                .collect::<Result<_>>()?;
            let theta = (2 + n_eta..2 + 2 * n_eta)
                .map(|i| rec[i].parse().map_err(|_| bad("theta")))
                .collect::<Result<_>>()?;
            draws.push(Draw {
                sweep,
                omega,
                eta,
                theta,
            });
        }
        Ok(Self {
            m: l + 1,
            draws,
            accepted: vec![0; n_theta],
            proposed: vec![0; n_theta],
            config: McmcConfig::default(),
        })
    }
}

/// Sums over the free block excluding one cell.
#[derive(Debug, Clone, Copy)]
struct Others {
    total: f64,
    row: f64,
    col: f64,
}

fn others(free: &[f64], l: usize, j: usize, k: usize) -> Others {
    let (mut total, mut row, mut col) = (0.0, 0.0, 0.0);
    for r in 0..l {
        for s in 0..l {
            if (r, s) == (j, k) {
                continue;
            }
            let x = free[r * l + s];
            total += x;
            if r == j {
                row += x;
            }
            if s == k {
                col += x;
            }
        }
    }
    Others { total, row, col }
}

fn support_from(o: Others, m: usize) -> (f64, f64) {
    let mf = m as f64;
    let lower = ((mf - 2.0) / mf - o.total).max(0.0);
    let upper = ((mf - 1.0) / mf - o.total)
        .min(1.0 / mf - o.row)
        .min(1.0 / mf - o.col);
    (lower, upper)
}

fn check_cell(free: &[f64], m: usize, j: usize, k: usize) -> Result<usize> {
    if m < 2 {
        return Err(Error::InvalidOrder(m));
    }
    let l = m - 1;
    if free.len() != l * l {
        return Err(Error::Dimension(format!(
            "free block of order {m} needs {} entries, got {}",
            l * l,
            free.len()
        )));
    }
    if j >= l || k >= l {
        return Err(Error::IndexOutOfRange { j, k, m });
    }
    Ok(l)
}

/// Interval `(l, u)` of values `theta_{j,k}` may take with every other free
/// cell fixed and the grid kept strictly feasible.
///
/// An interval with `l >= u` means the current state is infeasible.
pub fn conditional_support(free: &[f64], m: usize, j: usize, k: usize) -> Result<(f64, f64)> {
    let l = check_cell(free, m, j, k)?;
    Ok(support_from(others(free, l, j, k), m))
}

/// Per-cell data and prior terms needed to evaluate the conditional of one
/// free cell at any candidate value.
#[derive(Debug, Clone, Copy)]
struct CellConditional {
    m: usize,
    others: Others,
    lower: f64,
    upper: f64,
    /// Exponent of `theta` (Beta shape plus count, minus one).
    pow_theta: f64,
    /// Exponent of `1 - theta`.
    pow_one_minus: f64,
    r_row_end: f64,
    r_col_end: f64,
    r_corner: f64,
}

impl CellConditional {
    fn new(
        free: &[f64],
        m: usize,
        j: usize,
        k: usize,
        latent: &LatentState,
        counts: &CellCounts,
        prior: &SbepConfig,
    ) -> Self {
        let l = m - 1;
        let o = others(free, l, j, k);
        let (lower, upper) = support_from(o, m);
        let (alpha, beta) = prior.beta_shapes(&latent.eta, j, k);
        Self {
            m,
            others: o,
            lower,
            upper,
            pow_theta: alpha + counts.get(j, k) as f64 - 1.0,
            pow_one_minus: beta - 1.0,
            r_row_end: counts.get(j, l) as f64,
            r_col_end: counts.get(l, k) as f64,
            r_corner: counts.get(l, l) as f64,
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        if !(x > self.lower && x < self.upper) {
            return f64::NEG_INFINITY;
        }
        let mf = self.m as f64;
        let row_end = 1.0 / mf - self.others.row - x;
        let col_end = 1.0 / mf - self.others.col - x;
        let corner = self.others.total + x - (mf - 2.0) / mf;
        if !(x > 0.0 && row_end > 0.0 && col_end > 0.0 && corner > 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut v = self.pow_theta * x.ln() + self.pow_one_minus * (-x).ln_1p();
        if self.r_row_end > 0.0 {
            v += self.r_row_end * row_end.ln();
        }
        if self.r_col_end > 0.0 {
            v += self.r_col_end * col_end.ln();
        }
        if self.r_corner > 0.0 {
            v += self.r_corner * corner.ln();
        }
        v
    }

    fn window(&self, x: f64, delta: f64) -> (f64, f64) {
        let d = self.upper - self.lower;
        (
            (self.lower + SUPPORT_PAD).max(x - delta * d),
            (self.upper - SUPPORT_PAD).min(x + delta * d),
        )
    }
}

/// Unnormalized log conditional density of `theta_{j,k}` at `value`, all
/// other coordinates fixed; `-inf` outside the parameter space.
pub fn log_conditional_theta(
    free: &[f64],
    j: usize,
    k: usize,
    value: f64,
    latent: &LatentState,
    counts: &CellCounts,
    prior: &SbepConfig,
) -> Result<f64> {
    let m = prior.m();
    check_cell(free, m, j, k)?;
    if counts.m() != m {
        return Err(Error::Dimension("count and prior orders differ".into()));
    }
    Ok(CellConditional::new(free, m, j, k, latent, counts, prior).log_density(value))
}

/// One Metropolis-Hastings update of `theta_{j,k}` in place.
///
/// The proposal is uniform on `[max(l, t - delta d), min(u, t + delta d)]`
/// with `d = u - l`. The window is clipped near the support edges, so the
/// forward and reverse proposal densities differ and both enter the
/// acceptance ratio. Returns whether the proposal was accepted.
#[allow(clippy::too_many_arguments)]
pub fn mh_update_theta<R: Rng + ?Sized>(
    free: &mut [f64],
    j: usize,
    k: usize,
    latent: &LatentState,
    counts: &CellCounts,
    prior: &SbepConfig,
    delta: f64,
    rng: &mut R,
) -> Result<bool> {
    let m = prior.m();
    let l = check_cell(free, m, j, k)?;
    let cond = CellConditional::new(free, m, j, k, latent, counts, prior);
    let i = j * l + k;
    let current = free[i];
    let (lo, hi) = cond.window(current, delta);
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        log::warn!("empty proposal window for cell ({j}, {k}); update skipped");
        return Ok(false);
    }
    let proposal = lo + (hi - lo) * rng.random::<f64>();
    let (rlo, rhi) = cond.window(proposal, delta);
    let u: f64 = rng.random();
    if !(proposal > lo && current >= rlo && current <= rhi && rhi > rlo) {
        return Ok(false);
    }
    let log_ratio =
        cond.log_density(proposal) - cond.log_density(current) + (hi - lo).ln() - (rhi - rlo).ln();
    if log_ratio.is_nan() {
        return Ok(false);
    }
    if u.ln() < log_ratio {
        free[i] = proposal;
        Ok(true)
    } else {
        Ok(false)
    }
}

fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Normalized conditional probabilities of `eta_{j,k} = 0..=c_{j,k}`.
///
/// The log-mass at `e` is
/// `ln C(c, e) + e (logit omega + sum logit theta_{t,s})
///  - sum [ln Gamma(alpha_{t,s}(e)) + ln Gamma(beta_{t,s}(e))]`
/// with sums over the cells `(t, s)` whose neighbourhood contains `(j, k)`
/// and `alpha, beta` the Beta shapes of those cells with `eta_{j,k} = e`.
pub fn eta_conditional(
    free: &[f64],
    latent: &LatentState,
    prior: &SbepConfig,
    j: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let m = prior.m();
    let l = check_cell(free, m, j, k)?;
    let i = j * l + k;
    let c = prior.c()[i];
    if c == 0 {
        return Ok(vec![1.0]);
    }
    let reversed = crate::prior::reversed_neighbors(j, k, m)?;
    let mut eta = latent.eta.clone();
    let mut odds = logit(latent.omega);
    for &(t, s) in &reversed {
        odds += logit(free[t * l + s]);
    }
    let cf = c as f64;
    let lnc = ln_gamma(cf + 1.0);
    let mut logs = Vec::with_capacity(c as usize + 1);
    for e in 0..=c {
        eta[i] = e;
        let ef = e as f64;
        let mut v = lnc - ln_gamma(ef + 1.0) - ln_gamma(cf - ef + 1.0);
        if e > 0 {
            v += ef * odds;
        }
        for &(t, s) in &reversed {
            let (alpha, beta) = prior.beta_shapes(&eta, t, s);
            v -= ln_gamma(alpha) + ln_gamma(beta);
        }
        logs.push(v);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logs.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Draw `eta_{j,k}` from its conditional by inverse CDF.
pub fn sample_eta<R: Rng + ?Sized>(
    free: &[f64],
    latent: &LatentState,
    prior: &SbepConfig,
    j: usize,
    k: usize,
    rng: &mut R,
) -> Result<u32> {
    let probs = eta_conditional(free, latent, prior, j, k)?;
    if probs.len() == 1 {
        return Ok(0);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (e, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(e as u32);
        }
    }
    Ok((probs.len() - 1) as u32)
}

/// Draw `omega ~ Be(a + sum eta, b + sum (c - eta))`.
///
/// The draw is kept strictly inside `(0, 1)` at double precision.
pub fn sample_omega<R: Rng + ?Sized>(
    latent: &LatentState,
    prior: &SbepConfig,
    rng: &mut R,
) -> Result<f64> {
    let e: u64 = latent.eta.iter().map(|&x| x as u64).sum();
    let c: u64 = prior.c().iter().map(|&x| x as u64).sum();
    let d = Beta::new(prior.a() + e as f64, prior.b() + (c - e) as f64)
        .map_err(|err| Error::InvalidParameter(err.to_string()))?;
    Ok(d.sample(rng)
        .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

fn check_inputs(counts: &CellCounts, prior: &SbepConfig, config: &McmcConfig) -> Result<()> {
    config.validate()?;
    if counts.m() != prior.m() {
        return Err(Error::Dimension(format!(
            "count order {} does not match prior order {}",
            counts.m(),
            prior.m()
        )));
    }
    if !prior.within_data_guidance(counts.n()) && counts.n() > 0 {
        log::warn!(
            "c exceeds sqrt(n)/5 = {:.3}; the prior may overwhelm the data",
            (counts.n() as f64).sqrt() / 5.0
        );
    }
    Ok(())
}

/// Runs the Gibbs sampler with the seed in `config`.
pub fn run_chain(counts: &CellCounts, prior: &SbepConfig, config: &McmcConfig) -> Result<Chain> {
    let mut rng = substream(config.seed, 0);
    run_chain_with(counts, prior, config, &mut rng)
}

/// Runs `n_chains` independent chains in parallel; chain `i` uses stream
/// `i` of the configured seed, so chain 0 equals [`run_chain`].
pub fn run_chains(
    counts: &CellCounts,
    prior: &SbepConfig,
    config: &McmcConfig,
    n_chains: usize,
) -> Result<Vec<Chain>> {
    (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.seed, i as u64);
            run_chain_with(counts, prior, config, &mut rng)
        })
        .collect()
}

fn run_chain_with(
    counts: &CellCounts,
    prior: &SbepConfig,
    config: &McmcConfig,
    rng: &mut StreamRng,
) -> Result<Chain> {
    check_inputs(counts, prior, config)?;
    let m = prior.m();
    let l = m - 1;
    let p = l * l;
    let mut free = vec![1.0 / (m * m) as f64; p];
    let mut latent = LatentState {
        eta: vec![0; p],
        omega: prior.a() / (prior.a() + prior.b()),
    };
    let mut accepted = vec![0u64; p];
    let mut proposed = vec![0u64; p];
    let mut draws = Vec::with_capacity(config.stored_draws());

    for sweep in 1..=config.iterations {
        for j in 0..l {
            for k in 0..l {
                let i = j * l + k;
                proposed[i] += 1;
                if mh_update_theta(&mut free, j, k, &latent, counts, prior, config.delta, rng)? {
                    accepted[i] += 1;
                }
            }
        }
        for j in 0..l {
            for k in 0..l {
                let e = sample_eta(&free, &latent, prior, j, k, rng)?;
                latent.eta[j * l + k] = e;
            }
        }
        latent.omega = sample_omega(&latent, prior, rng)?;

        let grid = ThetaGrid::complete(m, &free)?;
        if !grid.is_feasible() {
            return Err(Error::InfeasibleState {
                sweep,
                detail: format!(
                    "theta = {free:?}, eta = {:?}, omega = {}",
                    latent.eta, latent.omega
                ),
            });
        }
        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            draws.push(Draw {
                sweep,
                omega: latent.omega,
                eta: latent.eta.clone(),
                theta: free.clone(),
            });
        }
    }
    Ok(Chain {
        m,
        draws,
        accepted,
        proposed,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::log_prior_density;
    use crate::rng::seeded;

    fn lat(eta: Vec<u32>, omega: f64) -> LatentState {
        LatentState { eta, omega }
    }

    #[test]
    fn support_examples() {
        let (lo, hi) = conditional_support(&[0.25], 2, 0, 0).unwrap();
        assert_eq!((lo, hi), (0.0, 0.5));
        let (lo, hi) = conditional_support(&[1.0 / 9.0; 4], 3, 0, 1).unwrap();
        assert!(lo.abs() < 1e-15);
        assert!((hi - 2.0 / 9.0).abs() < 1e-15);
        assert!(conditional_support(&[0.1; 4], 3, 2, 0).is_err());

        let mut rng = seeded(1);
        for m in 2..=8 {
            for _ in 0..20 {
                let g = ThetaGrid::random_interior(m, &mut rng).unwrap();
                let free = g.free();
                for j in 0..m - 1 {
                    for k in 0..m - 1 {
                        let (lo, hi) = conditional_support(&free, m, j, k).unwrap();
                        let x = free[j * (m - 1) + k];
                        assert!(lo < x && x < hi);
                    }
                }
            }
        }
    }

    #[test]
    fn log_conditional_outside_support_is_neg_inf() {
        let prior = SbepConfig::uniform(3, 0.5, 0.5, 1).unwrap();
        let counts = CellCounts::new(3, vec![3, 1, 2, 1, 4, 1, 2, 1, 3]).unwrap();
        let free = [1.0 / 9.0; 4];
        let l = lat(vec![0, 1, 1, 0], 0.4);
        for v in [-0.01, 0.0, 2.0 / 9.0, 0.3, 1.0] {
            let x = log_conditional_theta(&free, 0, 0, v, &l, &counts, &prior).unwrap();
            assert_eq!(x, f64::NEG_INFINITY, "value {v}");
        }
        let inside = log_conditional_theta(&free, 0, 0, 0.1, &l, &counts, &prior).unwrap();
        assert!(inside.is_finite());
    }

    #[test]
    fn log_conditional_without_data_is_beta_kernel() {
        let prior = SbepConfig::uniform(2, 2.0, 3.0, 0).unwrap();
        let counts = CellCounts::zeros(2).unwrap();
        let l = lat(vec![0], 0.5);
        let f = |x| log_conditional_theta(&[0.25], 0, 0, x, &l, &counts, &prior).unwrap();
        let kernel = |x: f64| x.ln() + 2.0 * (1.0 - x).ln();
        let offset = f(0.1) - kernel(0.1);
        for x in [0.05, 0.2, 0.33, 0.49] {
            assert!((f(x) - kernel(x) - offset).abs() < 1e-12);
        }
    }

    #[test]
    fn log_conditional_ratio_matches_joint() {
        use crate::mle::log_likelihood;
        let mut rng = seeded(2);
        let m = 4;
        let prior = SbepConfig::new(m, 0.7, 1.3, vec![0, 1, 2, 1, 2, 0, 2, 1, 1]).unwrap();
        let counts = CellCounts::new(m, (0..16).map(|i| (i * 7 % 5 + 1) as u64).collect()).unwrap();
        let latent = lat(vec![0, 1, 1, 0, 2, 0, 1, 0, 1], 0.35);
        let joint = |free: &[f64]| {
            let g = ThetaGrid::complete(m, free).unwrap();
            log_likelihood(&g, &counts).unwrap() + log_prior_density(free, &latent, &prior)
        };
        for _ in 0..20 {
            let free = ThetaGrid::random_interior(m, &mut rng).unwrap().free();
            for j in 0..3 {
                for k in 0..3 {
                    let (lo, hi) = conditional_support(&free, m, j, k).unwrap();
                    let a = lo + (hi - lo) * 0.3;
                    let b = lo + (hi - lo) * 0.8;
                    let mut fa = free.clone();
                    let mut fb = free.clone();
                    fa[j * 3 + k] = a;
                    fb[j * 3 + k] = b;
                    let cond = log_conditional_theta(&free, j, k, b, &latent, &counts, &prior)
                        .unwrap()
                        - log_conditional_theta(&free, j, k, a, &latent, &counts, &prior).unwrap();
                    let full = joint(&fb) - joint(&fa);
                    assert!((cond - full).abs() < 1e-10, "{cond} vs {full}");
                }
            }
        }
    }

    #[test]
    fn eta_conditional_matches_enumeration() {
        let m = 5;
        let prior =
            SbepConfig::new(m, 0.1, 0.1, (0..16).map(|i| (i % 3) as u32).collect()).unwrap();
        let mut rng = seeded(3);
        for _ in 0..10 {
            let free = ThetaGrid::random_interior(m, &mut rng).unwrap().free();
            let eta: Vec<u32> = prior.c().iter().map(|&c| rng.random_range(0..=c)).collect();
            let latent = lat(eta, rng.random_range(0.05..0.95));
            for j in 0..4 {
                for k in 0..4 {
                    let probs = eta_conditional(&free, &latent, &prior, j, k).unwrap();
                    let c = prior.c_at(j, k);
                    assert_eq!(probs.len(), c as usize + 1);
                    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    // oracle: the joint prior at each support point, normalized
                    let logs: Vec<f64> = (0..=c)
                        .map(|e| {
                            let mut l2 = latent.clone();
                            l2.eta[j * 4 + k] = e;
                            log_prior_density(&free, &l2, &prior)
                        })
                        .collect();
                    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = logs.iter().map(|v| (v - mx).exp()).sum();
                    for (p, v) in probs.iter().zip(&logs) {
                        assert!((p - (v - mx).exp() / z).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn eta_two_point_case() {
        // c = 1 on a single free cell, theta = 0.25, omega = 0.5
        let prior = SbepConfig::uniform(2, 0.5, 0.5, 1).unwrap();
        let latent = lat(vec![0], 0.5);
        let probs = eta_conditional(&[0.25], &latent, &prior, 0, 0).unwrap();
        // e = 0: Be(theta | 0.5, 1.5); e = 1: Be(theta | 1.5, 0.5); binomial weights equal
        let w0 = crate::prior::ln_beta_pdf(0.25, 0.5, 1.5).exp();
        let w1 = crate::prior::ln_beta_pdf(0.25, 1.5, 0.5).exp();
        assert!((probs[1] - w1 / (w0 + w1)).abs() < 1e-12);
        let zero = SbepConfig::uniform(2, 0.5, 0.5, 0).unwrap();
        let mut rng = seeded(0);
        assert_eq!(
            sample_eta(&[0.25], &latent, &zero, 0, 0, &mut rng).unwrap(),
            0
        );
    }

    #[test]
    fn omega_conditional_mean() {
        let prior = SbepConfig::uniform(4, 0.1, 0.1, 2).unwrap();
        let latent = lat(vec![2, 1, 0, 2, 2, 1, 0, 0, 1], 0.5);
        let mut rng = seeded(4);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_omega(&latent, &prior, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let (a, b): (f64, f64) = (0.1 + 9.0, 0.1 + 9.0);
        let expect = a / (a + b);
        let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
        assert!((mean - expect).abs() < 3.0 * sd / (n as f64).sqrt());

        let none = SbepConfig::uniform(2, 2.0, 5.0, 0).unwrap();
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_omega(&lat(vec![0], 0.5), &none, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 7.0).abs() < 3.0 * 0.16 / (n as f64).sqrt());
    }

    #[test]
    fn proposals_stay_inside_support() {
        let prior = SbepConfig::uniform(3, 0.1, 0.1, 1).unwrap();
        let counts = CellCounts::new(3, vec![2, 1, 0, 1, 2, 0, 0, 0, 3]).unwrap();
        let latent = lat(vec![1, 0, 0, 1], 0.5);
        let mut rng = seeded(9);
        let mut free = vec![1.0 / 9.0; 4];
        for _ in 0..5000 {
            for j in 0..2 {
                for k in 0..2 {
                    mh_update_theta(&mut free, j, k, &latent, &counts, &prior, 1.0, &mut rng)
                        .unwrap();
                    assert!(ThetaGrid::complete(3, &free).unwrap().is_feasible());
                }
            }
        }
    }

    #[test]
    fn chain_is_deterministic_and_respects_schedule() {
        let prior = SbepConfig::uniform(4, 0.1, 0.1, 1).unwrap();
        let counts = CellCounts::new(4, (0..16).map(|i| (i % 4 + 1) as u64).collect()).unwrap();
        let cfg = McmcConfig {
            iterations: 300,
            burn_in: 100,
            thin: 3,
            delta: 0.25,
            seed: 17,
        };
        let a = run_chain(&counts, &prior, &cfg).unwrap();
        let b = run_chain(&counts, &prior, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), cfg.stored_draws());
        assert_eq!(a.draws[0].sweep, 103);
        assert!(a.draws.windows(2).all(|w| w[1].sweep == w[0].sweep + 3));
        assert!(a.proposed.iter().all(|&p| p == 300));
        assert!(a.accepted.iter().zip(&a.proposed).all(|(x, p)| x <= p));
        for d in &a.draws {
            assert!(d.grid(4).unwrap().is_feasible());
            assert!(d.eta.iter().zip(prior.c()).all(|(e, c)| e <= c));
        }
        let chains = run_chains(&counts, &prior, &cfg, 3).unwrap();
        assert_eq!(chains[0], a);
        assert_ne!(chains[1].draws, a.draws);
    }

    #[test]
    fn chain_csv_round_trip() {
        let prior = SbepConfig::uniform(3, 0.1, 0.1, 2).unwrap();
        let counts = CellCounts::new(3, vec![4, 1, 1, 1, 4, 1, 1, 1, 4]).unwrap();
        let cfg = McmcConfig {
            iterations: 50,
            burn_in: 10,
            thin: 2,
            delta: 0.25,
            seed: 3,
        };
        let chain = run_chain(&counts, &prior, &cfg).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sweep,omega,eta_1_1,eta_1_2,eta_2_1,eta_2_2,theta_1_1,"));
        let back = Chain::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.m, 3);
        assert_eq!(back.draws, chain.draws);
        assert!(Chain::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = McmcConfig::default();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.stored_draws(), 2250);
        for bad in [
            McmcConfig {
                iterations: 10,
                burn_in: 10,
                ..ok.clone()
            },
            McmcConfig {
                thin: 0,
                ..ok.clone()
            },
            McmcConfig {
                delta: 0.0,
                ..ok.clone()
            },
            McmcConfig {
                delta: 1.5,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        let prior = SbepConfig::uniform(3, 0.1, 0.1, 0).unwrap();
        let counts = CellCounts::zeros(4).unwrap();
        assert!(run_chain(&counts, &prior, &ok).is_err());
    }
}
