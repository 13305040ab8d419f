//! Maximum-likelihood fits: a binary GLM with probit or logit link, the
//! outcome probit with decision-level intercepts, and ordinal
//! probit/logit models with log-gap cutpoints. All are fitted by
//! Newton–Raphson with step halving.

pub mod binary;
pub mod ordinal;

pub use binary::{fit_binary, fit_outcome_probit, BinaryFit, ProbitFit};
pub use ordinal::{fit_ordinal, OrdinalFit};

use crate::numeric::normal::{logistic_cdf, mills_lower, norm_cdf, norm_pdf, norm_sf};
use serde::{Deserialize, Serialize};

pub const MAX_ITER: usize = 100;
pub const GRAD_TOL: f64 = 1e-8;
pub const SEPARATION_NORM: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Probit,
    Logit,
}

impl Link {
    #[inline]
    pub fn cdf(self, u: f64) -> f64 {
        match self {
            Link::Probit => norm_cdf(u),
            Link::Logit => logistic_cdf(u),
        }
    }

    /// 1 − F(u) without cancellation.
    #[inline]
    pub fn sf(self, u: f64) -> f64 {
        match self {
            Link::Probit => norm_sf(u),
            Link::Logit => logistic_cdf(-u),
        }
    }

    #[inline]
    pub fn pdf(self, u: f64) -> f64 {
        match self {
            Link::Probit => norm_pdf(u),
            Link::Logit => {
                let f = logistic_cdf(u);
                f * (1.0 - f)
            }
        }
    }

    /// Derivative of the density.
    #[inline]
    pub fn dpdf(self, u: f64) -> f64 {
        match self {
            Link::Probit => -u * norm_pdf(u),
            Link::Logit => {
                let f = logistic_cdf(u);
                f * (1.0 - f) * (1.0 - 2.0 * f)
            }
        }
    }

    /// ln F(u), stable in the lower tail.
    pub fn log_cdf(self, u: f64) -> f64 {
        match self {
            Link::Probit => {
                if u > -30.0 {
                    norm_cdf(u).ln()
                } else {
                    -0.5 * u * u - 0.918_938_533_204_672_8 - mills_lower(u).ln()
                }
            }
            Link::Logit => {
                if u >= 0.0 {
                    -(-u).exp().ln_1p()
                } else {
                    u - u.exp().ln_1p()
                }
            }
        }
    }

    /// f(u)/F(u), stable in the lower tail.
    pub fn hazard_lower(self, u: f64) -> f64 {
        match self {
            Link::Probit => mills_lower(u),
            Link::Logit => logistic_cdf(-u),
        }
    }

    /// F(b) − F(a) for a < b, computed on the side that avoids cancellation.
    pub fn interval(self, a: f64, b: f64) -> f64 {
        if a > 0.0 {
            self.sf(a) - self.sf(b)
        } else {
            self.cdf(b) - self.cdf(a)
        }
    }

    pub fn quantile(self, p: f64) -> f64 {
        match self {
            Link::Probit => crate::numeric::norm_quantile(p),
            Link::Logit => (p / (1.0 - p)).ln(),
        }
    }
}

impl std::str::FromStr for Link {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "probit" => Ok(Link::Probit),
            "logit" => Ok(Link::Logit),
            _ => Err(crate::Error::InvalidArgument(format!("unknown link `{s}`"))),
        }
    }
}

/// Symmetric matrix as nested rows, for JSON.
pub(crate) fn mat_rows(m: &crate::numeric::linalg::Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
