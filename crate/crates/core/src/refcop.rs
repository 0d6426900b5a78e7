//! Reference copula families: closed-form CDFs, exact samplers and
//! theoretical Spearman's rho.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PseudoSample, ThetaGrid};
use crate::normal::{bvn_cdf, phi, phi_inv};
use crate::quad::{integrate_2d, Integral};
use crate::rng::open_unit;

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;
const RHO_TOL: f64 = 1e-10;

/// A parametric copula family with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "theta", rename_all = "lowercase")]
pub enum CopulaFamily {
    Product,
    /// `theta >= 1`
    Gumbel(f64),
    /// `theta >= -1`, `theta != 0`
    Clayton(f64),
    /// Ali-Mikhail-Haq, `-1 <= theta < 1`
    Amh(f64),
    /// Gaussian copula with correlation `-1 < theta < 1`
    Normal(f64),
}

impl CopulaFamily {
    /// Builds a family from its lowercase name and parameter, validating the
    /// parameter range.
    pub fn from_name(name: &str, theta: Option<f64>) -> Result<Self> {
        let need = |t: Option<f64>| {
            t.ok_or_else(|| Error::InvalidParameter(format!("family `{name}` needs a parameter")))
        };
        let family = match name.to_ascii_lowercase().as_str() {
            "product" | "independence" => {
                if let Some(t) = theta {
                    return Err(Error::InvalidParameter(format!(
                        "the product copula takes no parameter (got {t})"
                    )));
                }
                Self::Product
            }
            "gumbel" => Self::Gumbel(need(theta)?),
            "clayton" => Self::Clayton(need(theta)?),
            "amh" => Self::Amh(need(theta)?),
            "normal" | "gaussian" => Self::Normal(need(theta)?),
            other => return Err(Error::InvalidParameter(format!("unknown family `{other}`"))),
        };
        family.validate()?;
        Ok(family)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Product => true,
            Self::Gumbel(t) => t >= 1.0 && t.is_finite(),
            Self::Clayton(t) => t >= -1.0 && t != 0.0 && t.is_finite(),
            Self::Amh(t) => (-1.0..1.0).contains(&t),
            Self::Normal(t) => t > -1.0 && t < 1.0,
        };
        if ok {
            Ok(())
        } else {
            let range = match self {
                Self::Product => "",
                Self::Gumbel(_) => "theta >= 1",
                Self::Clayton(_) => "theta >= -1 and theta != 0",
                Self::Amh(_) => "-1 <= theta < 1",
                Self::Normal(_) => "-1 < theta < 1",
            };
            Err(Error::InvalidParameter(format!("{self}: requires {range}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Product => "product",
            Self::Gumbel(_) => "gumbel",
            Self::Clayton(_) => "clayton",
            Self::Amh(_) => "amh",
            Self::Normal(_) => "normal",
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            Self::Product => None,
            Self::Gumbel(t) | Self::Clayton(t) | Self::Amh(t) | Self::Normal(t) => Some(t),
        }
    }

    /// The family/parameter list of the simulation study.
    pub fn study_list() -> Vec<Self> {
        vec![
            Self::Product,
            Self::Gumbel(1.3),
            Self::Clayton(-0.3),
            Self::Clayton(1.0),
            Self::Amh(-0.5),
            Self::Amh(0.7),
            Self::Normal(-0.5),
            Self::Normal(0.5),
        ]
    }

    /// Copula CDF `C(u, v)`.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
            return Err(Error::OutsideUnitSquare { u, v });
        }
        if u == 0.0 || v == 0.0 {
            return Ok(0.0);
        }
        if u == 1.0 {
            return Ok(v);
        }
        if v == 1.0 {
            return Ok(u);
        }
        let c = match *self {
            Self::Product => u * v,
            Self::Gumbel(t) => {
                let s = (-u.ln()).powf(t) + (-v.ln()).powf(t);
                (-s.powf(1.0 / t)).exp()
            }
            Self::Clayton(-1.0) => (u + v - 1.0).max(0.0),
            Self::Clayton(t) => {
                let base = u.powf(-t) + v.powf(-t) - 1.0;
                if base <= 0.0 {
                    0.0
                } else {
                    base.powf(-1.0 / t)
                }
            }
            Self::Amh(t) => u * v / (1.0 - t * (1.0 - u) * (1.0 - v)),
            Self::Normal(t) => bvn_cdf(phi_inv(u), phi_inv(v), t),
        };
        Ok(c.clamp(0.0, u.min(v)))
    }

    /// Conditional CDF `P(V <= v | U = u) = dC/du` for `u` in `(0, 1)`.
    pub fn conditional_cdf(&self, u: f64, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let h = match *self {
            Self::Product => v,
            Self::Gumbel(t) => {
                let (lu, lv) = (-u.ln(), -v.ln());
                let s = lu.powf(t) + lv.powf(t);
                let c = (-s.powf(1.0 / t)).exp();
                c * s.powf(1.0 / t - 1.0) * lu.powf(t - 1.0) / u
            }
            Self::Clayton(-1.0) => {
                if u + v >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Clayton(t) => {
                let base = u.powf(-t) + v.powf(-t) - 1.0;
                if base <= 0.0 {
                    0.0
                } else {
                    u.powf(-t - 1.0) * base.powf(-1.0 / t - 1.0)
                }
            }
            Self::Amh(t) => {
                let d = 1.0 - t * (1.0 - u) * (1.0 - v);
                v * (1.0 - t * (1.0 - v)) / (d * d)
            }
            Self::Normal(t) => phi((phi_inv(v) - t * phi_inv(u)) / (1.0 - t * t).sqrt()),
        };
        h.clamp(0.0, 1.0)
    }

    /// Draws `n` independent pairs from the copula.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<PseudoSample> {
        self.validate()?;
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let (u, v) = self.draw(rng);
            points.push((to_open(u), to_open(v)));
        }
        PseudoSample::new(points)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match *self {
            Self::Product => (open_unit(rng), open_unit(rng)),
            Self::Normal(t) => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                (phi(z1), phi(t * z1 + (1.0 - t * t).sqrt() * z2))
            }
            Self::Clayton(t) if t > 0.0 => {
                // Marshall-Olkin: gamma frailty, Laplace transform (1+s)^(-1/t)
                let frailty = Gamma::new(1.0 / t, 1.0)
                    .expect("validated shape")
                    .sample(rng)
                    .max(f64::MIN_POSITIVE);
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                (
                    (1.0 + e1 / frailty).powf(-1.0 / t),
                    (1.0 + e2 / frailty).powf(-1.0 / t),
                )
            }
            Self::Clayton(t) => {
                let u = open_unit(rng);
                if t == -1.0 {
                    return (u, 1.0 - u);
                }
                let w = open_unit(rng);
                let base = (w.powf(-t / (1.0 + t)) - 1.0) * u.powf(-t) + 1.0;
                (u, base.max(0.0).powf(-1.0 / t))
            }
            Self::Amh(t) => {
                let u = open_unit(rng);
                let w = open_unit(rng);
                (
                    u,
                    amh_inverse(t, u, w).unwrap_or_else(|| self.invert_bisect(u, w)),
                )
            }
            Self::Gumbel(_) => {
                let u = open_unit(rng);
                let w = open_unit(rng);
                (u, self.invert_bisect(u, w))
            }
        }
    }

    /// Solves `conditional_cdf(u, v) = w` for `v` by bisection.
    fn invert_bisect(&self, u: f64, w: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..BISECTION_MAX_ITER {
            if hi - lo <= BISECTION_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.conditional_cdf(u, mid) < w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Spearman's rho, `12 * integral of C over the unit square - 3`, by
    /// adaptive quadrature. The returned error bounds the absolute error.
    pub fn true_rho(&self) -> Integral {
        let r = integrate_2d(
            |u, v| self.cdf(u, v).unwrap_or(0.0),
            (0.0, 1.0),
            (0.0, 1.0),
            RHO_TOL / 12.0,
        );
        Integral {
            value: 12.0 * r.value - 3.0,
            error: 12.0 * r.error,
        }
    }

    /// Closed-form Spearman's rho where one is known (Product and Normal).
    pub fn rho_closed_form(&self) -> Option<f64> {
        match *self {
            Self::Product => Some(0.0),
            Self::Normal(t) => Some(6.0 / std::f64::consts::PI * (t / 2.0).asin()),
            Self::Clayton(-1.0) => Some(-1.0),
            _ => None,
        }
    }

    /// Exact checkerboard discretization: cell masses of the copula on the
    /// regular `m x m` partition.
    pub fn checkerboard(&self, m: usize) -> Result<ThetaGrid> {
        if m < 2 {
            return Err(Error::InvalidOrder(m));
        }
        let mf = m as f64;
        let mut corner = vec![0.0; (m + 1) * (m + 1)];
        for i in 0..=m {
            for j in 0..=m {
                corner[i * (m + 1) + j] = self.cdf(i as f64 / mf, j as f64 / mf)?;
            }
        }
        let at = |i: usize, j: usize| corner[i * (m + 1) + j];
        let mut cells = Vec::with_capacity(m * m);
        for j in 0..m {
            for k in 0..m {
                let mass = at(j + 1, k + 1) - at(j, k + 1) - at(j + 1, k) + at(j, k);
                cells.push(mass.max(0.0));
            }
        }
        ThetaGrid::from_cells(m, cells)
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.theta() {
            None => f.write_str(self.name()),
            Some(t) => write!(f, "{}({t})", self.name()),
        }
    }
}

fn to_open(x: f64) -> f64 {
    x.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Closed-form inverse of the AMH conditional CDF. With `a = t(1-u)`,
/// `h(u, v) = w` is the quadratic
/// `(t - w a^2) v^2 + (1 - t - 2 w a (1 - a)) v - w (1 - a)^2 = 0`,
/// whose root in `[0, 1]` is returned. `None` if no root lands there
/// (only possible through rounding).
fn amh_inverse(t: f64, u: f64, w: f64) -> Option<f64> {
    let a = t * (1.0 - u);
    let a2 = t - w * a * a;
    let a1 = 1.0 - t - 2.0 * w * a * (1.0 - a);
    let a0 = -w * (1.0 - a) * (1.0 - a);
    let slack = 1e-12;
    let in_range = |v: f64| v.is_finite() && v >= -slack && v <= 1.0 + slack;
    if a2.abs() < 1e-14 {
        let v = -a0 / a1;
        return in_range(v).then(|| v.clamp(0.0, 1.0));
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (a1 + a1.signum() * disc.sqrt());
    let roots = [q / a2, if q != 0.0 { a0 / q } else { f64::NAN }];
    roots
        .into_iter()
        .find(|&v| in_range(v))
        .map(|v| v.clamp(0.0, 1.0))
}

/// Draws `n` points from the checkerboard copula of `grid`: a cell is chosen
/// with probability `theta[j][k]`, then a point uniformly inside it.
pub fn sample_checkerboard<R: Rng + ?Sized>(
    grid: &ThetaGrid,
    n: usize,
    rng: &mut R,
) -> Result<PseudoSample> {
    if !grid.is_feasible_closed() {
        return Err(Error::InvalidParameter("grid has negative cells".into()));
    }
    let m = grid.m();
    let mf = m as f64;
    let mut cumulative = Vec::with_capacity(m * m);
    let mut acc = 0.0;
    for &c in grid.cells() {
        acc += c;
        cumulative.push(acc);
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random::<f64>() * acc;
        let idx = cumulative.partition_point(|&c| c <= x).min(m * m - 1);
        let (j, k) = (idx / m, idx % m);
        let u = (j as f64 + open_unit(rng)) / mf;
        let v = (k as f64 + open_unit(rng)) / mf;
        points.push((u.min(1.0), v.min(1.0)));
    }
    PseudoSample::new(points)
}
