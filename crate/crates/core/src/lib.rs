//! Bivariate dependence estimation with a piecewise-constant copula.
//!
//! The unit square is cut into an `m x m` grid of equal cells and the copula
//! density is constant on each cell. The cell masses form a [`ThetaGrid`]:
//! rows and columns each carry mass `1/m`, so only the leading
//! `(m-1) x (m-1)` block is free and the last row and column are derived.
//!
//! Two estimation routes are provided:
//!
//! - [`mle`]: constrained maximum likelihood from cell counts, including the
//!   `m = 2` closed form and the sample-copula estimator.
//! - [`mcmc`]: a Gibbs sampler under the spatial beta-process prior of
//!   [`prior`], with a truncated random-walk Metropolis-Hastings step for each
//!   free cell mass.
//!
//! [`refcop`] supplies the reference families used to benchmark fits and
//! [`gof`] the fit diagnostics (LPML, supremum norm, Spearman's rho intervals).
//!
//! All indices in this crate are zero-based: cell `(j, k)` covers
//! `(j/m, (j+1)/m] x (k/m, (k+1)/m]`.

pub mod error;
pub mod gof;
pub mod grid;
pub mod mcmc;
pub mod mle;
pub mod normal;
pub mod prior;
pub mod quad;
pub mod refcop;
pub mod rng;

pub use error::{Error, Result};
pub use gof::{GofOptions, GofReport, Lpml, SupNorm};
pub use grid::{CellCounts, PseudoSample, ThetaGrid, TieMode};
pub use mcmc::{Chain, Draw, McmcConfig};
pub use mle::{MleMode, MleResult};
pub use prior::{LatentState, SbepConfig};
pub use refcop::CopulaFamily;
