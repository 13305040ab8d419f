//! Binary-response GLM and the outcome probit
//! Pr(Y=1 | D=d, x) = Φ(−δ_d + xᵀα).

use super::{mat_rows, Link, GRAD_TOL, MAX_ITER, SEPARATION_NORM};
use crate::data::{Dataset, Design};
use crate::error::{Error, Result};
use crate::numeric::linalg::{cholesky, full_column_rank, Mat, Vector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub link: Link,
}

impl BinaryFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta: f64 = row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum();
        self.link.cdf(eta)
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.vcov[j][j].max(0.0).sqrt()).collect()
    }
}

/// Per-case log-likelihood contribution, score dℓ/dη and weight −d²ℓ/dη².
#[inline]
fn case_terms(link: Link, y: u8, eta: f64) -> (f64, f64, f64) {
    // Work with s = ±η so that the observed event is always F(s).
    let (s, sign) = if y == 1 { (eta, 1.0) } else { (-eta, -1.0) };
    let ll = link.log_cdf(s);
    let lam = link.hazard_lower(s);
    let w = match link {
        Link::Probit => lam * (s + lam),
        Link::Logit => {
            let f = link.cdf(s);
            f * (1.0 - f)
        }
    };
    (ll, sign * lam, w)
}

/// Log-likelihood and gradient at `beta`.
pub fn binary_loglik_grad(y: &[u8], x: &Design, link: Link, beta: &[f64]) -> (f64, Vec<f64>) {
    let q = x.ncols();
    let mut g = vec![0.0; q];
    let mut ll = 0.0;
    for i in 0..y.len() {
        let row = x.row(i);
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let (l, s, _) = case_terms(link, y[i], eta);
        ll += l;
        for j in 0..q {
            g[j] += s * row[j];
        }
    }
    (ll, g)
}

fn loglik_hessian(y: &[u8], x: &Design, link: Link, beta: &[f64]) -> (f64, Vector, Mat) {
    let q = x.ncols();
    let mut g = Vector::zeros(q);
    let mut h = Mat::zeros(q, q);
    let mut ll = 0.0;
    for i in 0..y.len() {
        let row = x.row(i);
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let (l, s, w) = case_terms(link, y[i], eta);
        ll += l;
        for a in 0..q {
            g[a] += s * row[a];
            let wa = w * row[a];
            for b in 0..=a {
                h[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    (ll, g, h)
}

/// Under separation the likelihood flattens out and the gradient can meet the
/// tolerance while coefficients are still drifting; an exploding standard
/// error is treated the same as an exploding coefficient.
pub(crate) fn check_divergence(beta: &[f64], vcov: &Mat) -> Result<()> {
    let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    let max_var = (0..vcov.nrows()).map(|j| vcov[(j, j)]).fold(0.0f64, f64::max);
    if norm > SEPARATION_NORM || !(max_var.sqrt() < SEPARATION_NORM) {
        return Err(Error::Separation { norm });
    }
    Ok(())
}

/// Maximum-likelihood fit of Pr(Y=1 | x) = F(xᵀβ). Any intercept must be an
/// explicit column of `x`.
pub fn fit_binary(y: &[u8], x: &Design, link: Link) -> Result<BinaryFit> {
    if y.len() != x.nrows() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::NoVariation(format!("{ones} of {} responses are 1", y.len())));
    }
    if !full_column_rank(&x.to_matrix()) {
        return Err(Error::RankDeficient);
    }
    let q = x.ncols();
    let mut beta = vec![0.0; q];
    let (mut ll, mut g, mut h) = loglik_hessian(y, x, link, &beta);
    let mut iterations = 0;
    let mut converged = g.amax() < GRAD_TOL;
    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let step = cholesky(&h)?.solve(&g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let (cl, _) = binary_loglik_grad(y, x, link, &cand);
            if cl.is_finite() && cl >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > SEPARATION_NORM {
            return Err(Error::Separation { norm });
        }
        let (nl, ng, nh) = loglik_hessian(y, x, link, &beta);
        ll = nl;
        g = ng;
        h = nh;
        converged = g.amax() < GRAD_TOL;
        if !accepted {
            break;
        }
    }
    if !converged {
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > SEPARATION_NORM / 10.0 {
            return Err(Error::Separation { norm });
        }
        return Err(Error::NotConverged {
            iterations,
            grad_norm: g.amax(),
        });
    }
    let vcov = cholesky(&h)?.inverse();
    check_divergence(&beta, &vcov)?;
    Ok(BinaryFit {
        names: x.names.clone(),
        coefficients: beta,
        vcov: mat_rows(&vcov),
        loglik: ll,
        converged,
        iterations,
        link,
    })
}

/// Outcome model with decision-level intercepts: Pr(Y=1 | D=d, x) = Φ(−δ_d + xᵀα).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub outcome: String,
    pub covariate_names: Vec<String>,
    pub alpha: Vec<f64>,
    /// δ_0..δ_k. Not constrained to be monotone.
    pub delta: Vec<f64>,
    /// Covariance of (α, δ) in that order.
    pub vcov: Vec<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ProbitFit {
    pub fn k(&self) -> usize {
        self.delta.len() - 1
    }

    pub fn linear(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.alpha).map(|(x, a)| x * a).sum()
    }

    /// Pr(Y=1 | D=d, x).
    pub fn predict(&self, d: usize, row: &[f64]) -> f64 {
        crate::numeric::norm_cdf(-self.delta[d] + self.linear(row))
    }

    /// All coefficients in (α, δ) order.
    pub fn coefficients(&self) -> Vec<f64> {
        self.alpha.iter().chain(&self.delta).copied().collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.vcov.len()).map(|j| self.vcov[j][j].max(0.0).sqrt()).collect()
    }
}

/// Augmented regressor matrix (x, −W) where W is the decision one-hot.
pub fn outcome_regressors(d: &[usize], k: usize, design: &Design) -> Result<Design> {
    let p = design.ncols();
    let mut names = design.names.clone();
    names.extend((0..=k).map(|l| format!("delta_{l}")));
    let mut data = Vec::with_capacity(d.len() * (p + k + 1));
    for (i, &di) in d.iter().enumerate() {
        data.extend_from_slice(design.row(i));
        data.extend((0..=k).map(|l| if l == di { -1.0 } else { 0.0 }));
    }
    Design::new(names, d.len(), data)
}

pub fn fit_outcome_probit(ds: &Dataset, outcome: &str, design: &Design) -> Result<ProbitFit> {
    if design.nrows() != ds.len() {
        return Err(Error::LengthMismatch {
            expected: ds.len(),
            got: design.nrows(),
        });
    }
    let y = ds.outcome(outcome)?;
    fit_outcome_probit_raw(&y, &ds.d(), ds.k(), design, outcome)
}

pub fn fit_outcome_probit_raw(y: &[u8], d: &[usize], k: usize, design: &Design, outcome: &str) -> Result<ProbitFit> {
    let aug = outcome_regressors(d, k, design)?;
    let fit = fit_binary(y, &aug, Link::Probit)?;
    let p = design.ncols();
    Ok(ProbitFit {
        outcome: outcome.to_string(),
        covariate_names: design.names.clone(),
        alpha: fit.coefficients[..p].to_vec(),
        delta: fit.coefficients[p..].to_vec(),
        vcov: fit.vcov,
        loglik: fit.loglik,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}
