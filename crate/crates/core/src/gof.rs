//! Goodness-of-fit summaries of a fitted chain: posterior mean grid, LPML,
//! supremum-norm distance to a reference copula and Spearman's rho
//! intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellCounts, ThetaGrid};
use crate::mcmc::Chain;
use crate::mle::sample_copula_estimate;
use crate::refcop::CopulaFamily;

/// Points per axis of the uniform part of the sup-norm lattice, minus one.
pub const SUP_NORM_RESOLUTION: usize = 512;

/// Elementwise mean of the stored free blocks, completed to a full grid.
pub fn posterior_mean_grid(chain: &Chain) -> Result<ThetaGrid> {
    let first = chain.draws.first().ok_or(Error::EmptyChain)?;
    let mut mean = vec![0.0; first.theta.len()];
    for d in &chain.draws {
        for (acc, t) in mean.iter_mut().zip(&d.theta) {
            *acc += t;
        }
    }
    let s = chain.len() as f64;
    mean.iter_mut().for_each(|x| *x /= s);
    ThetaGrid::complete(chain.m, &mean)
}

/// Log pseudo marginal likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lpml {
    /// `sum / n`
    pub per_observation: f64,
    /// Sum of log CPO over all observations.
    pub sum: f64,
    /// Occupied cells `(j, k)` (zero-based) where some draw had
    /// `theta <= 0`; their log CPO is `-inf`.
    pub flagged: Vec<(usize, usize)>,
}

/// LPML from cell memberships. The CPO of an observation in cell `(j, k)` is
/// the harmonic mean over draws of the density `m^2 theta_{j,k}`.
pub fn lpml(chain: &Chain, counts: &CellCounts) -> Result<Lpml> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let m = chain.m;
    if counts.m() != m {
        return Err(Error::Dimension(format!(
            "chain has m = {m}, counts have m = {}",
            counts.m()
        )));
    }
    let grids = chain.grids()?;
    let log_s = (grids.len() as f64).ln();
    let log_m2 = 2.0 * (m as f64).ln();
    let mut sum = 0.0;
    let mut flagged = Vec::new();
    let mut neg_log_dens = Vec::with_capacity(grids.len());
    for j in 0..m {
        for k in 0..m {
            let r = counts.get(j, k);
            if r == 0 {
                continue;
            }
            neg_log_dens.clear();
            neg_log_dens.extend(grids.iter().map(|g| {
                let t = g.get(j, k);
                if t > 0.0 {
                    -(log_m2 + t.ln())
                } else {
                    f64::INFINITY
                }
            }));
            let log_cpo = if neg_log_dens.iter().any(|x| x.is_infinite()) {
                flagged.push((j, k));
                f64::NEG_INFINITY
            } else {
                -(log_sum_exp(&neg_log_dens) - log_s)
            };
            sum += r as f64 * log_cpo;
        }
    }
    Ok(Lpml {
        per_observation: sum / counts.n() as f64,
        sum,
        flagged,
    })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Largest absolute CDF difference and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    pub value: f64,
    pub u: f64,
    pub v: f64,
}

/// Reference CDF tabulated on the sup-norm lattice for grids of order `m`:
/// the cell corners `i/m` together with `i/512`, on both axes.
#[derive(Debug, Clone)]
pub struct CdfLattice {
    m: usize,
    coords: Vec<f64>,
    values: Vec<f64>,
}

impl CdfLattice {
    pub fn new(reference: &CopulaFamily, m: usize) -> Result<Self> {
        reference.validate()?;
        let coords = lattice_coords(m);
        let mut values = Vec::with_capacity(coords.len() * coords.len());
        for &u in &coords {
            for &v in &coords {
                values.push(reference.cdf(u, v)?);
            }
        }
        Ok(Self { m, coords, values })
    }

    pub fn sup_norm(&self, est: &ThetaGrid) -> Result<SupNorm> {
        if est.m() != self.m {
            return Err(Error::Dimension(format!(
                "lattice built for m = {}, grid has m = {}",
                self.m,
                est.m()
            )));
        }
        let n = self.coords.len();
        let mut best = SupNorm {
            value: 0.0,
            u: 0.0,
            v: 0.0,
        };
        for (a, &u) in self.coords.iter().enumerate() {
            for (b, &v) in self.coords.iter().enumerate() {
                let d = (self.values[a * n + b] - est.cdf(u, v)?).abs();
                if d > best.value {
                    best = SupNorm { value: d, u, v };
                }
            }
        }
        Ok(best)
    }
}

fn lattice_coords(m: usize) -> Vec<f64> {
    let mut coords: Vec<f64> = (0..=SUP_NORM_RESOLUTION)
        .map(|i| i as f64 / SUP_NORM_RESOLUTION as f64)
        .chain((0..=m).map(|i| i as f64 / m as f64))
        .collect();
    coords.sort_by(f64::total_cmp);
    coords.dedup();
    coords
}

/// `sup |C_ref - C_est|` over the evaluation lattice.
pub fn sup_norm(est: &ThetaGrid, reference: &CopulaFamily) -> Result<SupNorm> {
    CdfLattice::new(reference, est.m())?.sup_norm(est)
}

/// Spearman's rho of every stored draw.
pub fn rho_draws(chain: &Chain) -> Result<Vec<f64>> {
    Ok(chain.grids()?.iter().map(ThetaGrid::spearman_rho).collect())
}

/// Quantile of already sorted data by linear interpolation between order
/// statistics (position `(n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed interval of `values` at the given level.
pub fn equal_tailed(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyChain);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level {level} not in (0, 1)"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((
        quantile_sorted(&sorted, tail),
        quantile_sorted(&sorted, 1.0 - tail),
    ))
}

/// Equal-tailed credible interval for Spearman's rho.
pub fn rho_interval(chain: &Chain, level: f64) -> Result<(f64, f64)> {
    equal_tailed(&rho_draws(chain)?, level)
}

/// One row of a goodness-of-fit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub m: usize,
    /// Uniform prior `c`, when the prior uses one.
    pub c: Option<u32>,
    /// `raw` or `rank`.
    pub mode: String,
    pub reference: Option<CopulaFamily>,
    /// Theoretical rho of the reference family.
    pub rho: Option<f64>,
    pub rho_mean: f64,
    pub rho_interval: (f64, f64),
    pub level: f64,
    pub lpml: f64,
    pub lpml_sum: f64,
    /// Sup norm of the posterior mean grid.
    pub sn_bayes: Option<f64>,
    /// Sup norm of the sample copula.
    pub sn_freq: Option<f64>,
}

/// Inputs of [`GofReport::compute`] besides the chain and data.
#[derive(Debug, Clone)]
pub struct GofOptions {
    pub c: Option<u32>,
    pub mode: String,
    pub level: f64,
    pub reference: Option<CopulaFamily>,
    /// Also report the sup norm of the sample copula.
    pub sample_copula: bool,
}

impl Default for GofOptions {
    fn default() -> Self {
        Self {
            c: None,
            mode: "rank".into(),
            level: 0.95,
            reference: None,
            sample_copula: false,
        }
    }
}

impl GofReport {
    pub fn compute(chain: &Chain, counts: &CellCounts, opts: &GofOptions) -> Result<Self> {
        if opts.sample_copula && opts.reference.is_none() {
            return Err(Error::InvalidParameter(
                "a sup norm needs a reference family".into(),
            ));
        }
        let rhos = rho_draws(chain)?;
        let rho_interval = equal_tailed(&rhos, opts.level)?;
        let rho_mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
        let l = lpml(chain, counts)?;
        let (mut sn_bayes, mut sn_freq, mut rho) = (None, None, None);
        if let Some(reference) = &opts.reference {
            let lattice = CdfLattice::new(reference, chain.m)?;
            sn_bayes = Some(lattice.sup_norm(&posterior_mean_grid(chain)?)?.value);
            if opts.sample_copula {
                sn_freq = Some(lattice.sup_norm(&sample_copula_estimate(counts)?)?.value);
            }
            rho = Some(
                reference
                    .rho_closed_form()
                    .unwrap_or_else(|| reference.true_rho().value),
            );
        }
        Ok(Self {
            m: chain.m,
            c: opts.c,
            mode: opts.mode.clone(),
            reference: opts.reference,
            rho,
            rho_mean,
            rho_interval,
            level: opts.level,
            lpml: l.per_observation,
            lpml_sum: l.sum,
            sn_bayes,
            sn_freq,
        })
    }

    pub fn table_header() -> String {
        format!(
            "{:>3} {:>3} {:>6} {:>17} {:>8} {:>7} {:>7}",
            "m", "c", "rho", "rho interval", "LPML", "SN_B", "SN_F"
        )
    }

    /// The report as a fixed-width table row, three decimals.
    pub fn table_row(&self) -> String {
        let opt = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
        format!(
            "{:>3} {:>3} {:>6} {:>17} {:>8.3} {:>7} {:>7}",
            self.m,
            self.c.map_or("-".to_string(), |c| c.to_string()),
            opt(self.rho, 2),
            format!("({:.3},{:.3})", self.rho_interval.0, self.rho_interval.1),
            self.lpml,
            opt(self.sn_bayes, 3),
            opt(self.sn_freq, 3),
        )
    }
}
