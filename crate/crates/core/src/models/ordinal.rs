//! Ordinal probit / proportional-odds logit:
//! Pr(D ≤ j | x) = F(θ_{j+1} − xᵀβ), j = 0..k−1.
//!
//! Cutpoints are optimised as τ with θ_1 = τ_1 and θ_j = θ_{j−1} + exp(τ_j),
//! so every Newton iterate is strictly increasing.

use super::binary::check_divergence;
use super::{mat_rows, Link, GRAD_TOL, MAX_ITER, SEPARATION_NORM};
use crate::data::Design;
use crate::error::{Error, Result};
use crate::numeric::linalg::{cholesky, full_column_rank, Mat, Vector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// θ_1 < … < θ_k.
    pub cutpoints: Vec<f64>,
    pub link: Link,
    /// Covariance of (β, θ).
    pub vcov: Vec<Vec<f64>>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl OrdinalFit {
    pub fn k(&self) -> usize {
        self.cutpoints.len()
    }

    pub fn linear(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }

    /// Pr(D = d | x) for d = 0..k.
    pub fn probs(&self, row: &[f64]) -> Vec<f64> {
        category_probs(self.link, &self.cutpoints, self.linear(row))
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.vcov.len()).map(|j| self.vcov[j][j].max(0.0).sqrt()).collect()
    }
}

/// Category probabilities given cutpoints and linear predictor.
pub fn category_probs(link: Link, theta: &[f64], eta: f64) -> Vec<f64> {
    let k = theta.len();
    (0..=k)
        .map(|d| {
            let lo = if d == 0 { f64::NEG_INFINITY } else { theta[d - 1] - eta };
            let hi = if d == k { f64::INFINITY } else { theta[d] - eta };
            link.interval(lo, hi)
        })
        .collect()
}

pub fn theta_from_tau(tau: &[f64]) -> Vec<f64> {
    let mut theta = Vec::with_capacity(tau.len());
    for (j, &t) in tau.iter().enumerate() {
        theta.push(if j == 0 { t } else { theta[j - 1] + t.exp() });
    }
    theta
}

fn tau_from_theta(theta: &[f64]) -> Vec<f64> {
    (0..theta.len())
        .map(|j| if j == 0 { theta[0] } else { (theta[j] - theta[j - 1]).ln() })
        .collect()
}

struct Eval {
    ll: f64,
    /// Gradient in natural (β, θ) coordinates.
    g: Vector,
    /// Negative Hessian in natural coordinates.
    neg_h: Mat,
}

fn evaluate(d: &[usize], x: &Design, link: Link, beta: &[f64], theta: &[f64], want_hessian: bool) -> Eval {
    let q = x.ncols();
    let k = theta.len();
    let m = q + k;
    let mut g = Vector::zeros(m);
    let mut neg_h = if want_hessian { Mat::zeros(m, m) } else { Mat::zeros(0, 0) };
    let mut ll = 0.0;
    for (i, &di) in d.iter().enumerate() {
        let row = x.row(i);
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let has_lo = di > 0;
        let has_hi = di < k;
        let u_lo = if has_lo { theta[di - 1] - eta } else { f64::NEG_INFINITY };
        let u_hi = if has_hi { theta[di] - eta } else { f64::INFINITY };
        let p = link.interval(u_lo, u_hi);
        if !(p > 0.0) {
            ll = f64::NEG_INFINITY;
            continue;
        }
        ll += p.ln();
        let (a, da) = if has_hi { (link.pdf(u_hi), link.dpdf(u_hi)) } else { (0.0, 0.0) };
        let (b, db) = if has_lo { (link.pdf(u_lo), link.dpdf(u_lo)) } else { (0.0, 0.0) };
        let g_eta = -(a - b) / p;
        for j in 0..q {
            g[j] += g_eta * row[j];
        }
        let ih = q + di; // index of θ_{d+1} (upper)
        let il = if has_lo { q + di - 1 } else { 0 }; // index of θ_d (lower)
        if has_hi {
            g[ih] += a / p;
        }
        if has_lo {
            g[il] -= b / p;
        }
        if !want_hessian {
            continue;
        }
        let p2 = p * p;
        let h_ee = (da - db) / p - (a - b) * (a - b) / p2;
        let h_eh = -da / p + a * (a - b) / p2;
        let h_el = db / p - b * (a - b) / p2;
        let h_hh = da / p - a * a / p2;
        let h_ll = -db / p - b * b / p2;
        let h_hl = a * b / p2;
        for r in 0..q {
            for c in 0..=r {
                neg_h[(r, c)] -= h_ee * row[r] * row[c];
            }
            if has_hi {
                neg_h[(ih, r)] -= h_eh * row[r];
            }
            if has_lo {
                neg_h[(il, r)] -= h_el * row[r];
            }
        }
        if has_hi {
            neg_h[(ih, ih)] -= h_hh;
        }
        if has_lo {
            neg_h[(il, il)] -= h_ll;
        }
        if has_hi && has_lo {
            neg_h[(ih, il)] -= h_hl;
        }
    }
    if want_hessian {
        for r in 0..m {
            for c in 0..r {
                neg_h[(c, r)] = neg_h[(r, c)];
            }
        }
    }
    Eval { ll, g, neg_h }
}

/// Log-likelihood and its gradient in natural (β, θ) coordinates.
pub fn ordinal_loglik_grad(d: &[usize], x: &Design, link: Link, beta: &[f64], theta: &[f64]) -> (f64, Vec<f64>) {
    let e = evaluate(d, x, link, beta, theta, false);
    (e.ll, e.g.iter().copied().collect())
}

/// Jacobian ∂θ/∂τ.
fn jacobian(tau: &[f64]) -> Mat {
    let k = tau.len();
    Mat::from_fn(k, k, |j, m| {
        if m == 0 {
            1.0
        } else if m <= j {
            tau[m].exp()
        } else {
            0.0
        }
    })
}

/// Fit the ordinal model. `x` must not contain an intercept or any other
/// constant column.
pub fn fit_ordinal(d: &[usize], x: &Design, k: usize, link: Link) -> Result<OrdinalFit> {
    let n = d.len();
    if n != x.nrows() {
        return Err(Error::LengthMismatch { expected: x.nrows(), got: n });
    }
    if k < 1 {
        return Err(Error::InvalidArgument("ordinal model needs k >= 1".into()));
    }
    let mut counts = vec![0usize; k + 1];
    for &di in d {
        if di > k {
            return Err(Error::InvalidArgument(format!("decision {di} outside 0..={k}")));
        }
        counts[di] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCategory(c));
    }
    if !x.constant_columns().is_empty() || !full_column_rank(&x.to_matrix()) {
        return Err(Error::RankDeficient);
    }
    let q = x.ncols();
    let mut beta = vec![0.0; q];
    let mut cum = 0usize;
    let theta0: Vec<f64> = (0..k)
        .map(|j| {
            cum += counts[j];
            link.quantile(cum as f64 / n as f64)
        })
        .collect();
    let mut tau = tau_from_theta(&theta0);

    let search = |beta: &[f64], tau: &[f64]| -> Eval {
        evaluate(d, x, link, beta, &theta_from_tau(tau), true)
    };
    let mut cur = search(&beta, &tau);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let jac = jacobian(&tau);
        // Gradient in (β, τ).
        let g_nat = &cur.g;
        let mut g = Vector::zeros(q + k);
        for j in 0..q {
            g[j] = g_nat[j];
        }
        let g_tau = jac.transpose() * g_nat.rows(q, k);
        for j in 0..k {
            g[q + j] = g_tau[j];
        }
        if g_nat.amax() < GRAD_TOL && g.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        if iterations >= MAX_ITER {
            break;
        }
        iterations += 1;
        // Newton matrix Tᵀ(−H)T with T = blockdiag(I, J); positive definite
        // because the likelihood is log-concave in (β, θ).
        let mut t = Mat::identity(q + k, q + k);
        t.view_mut((q, q), (k, k)).copy_from(&jac);
        let m = t.transpose() * &cur.neg_h * &t;
        let step = cholesky(&m)?.solve(&g);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let nb: Vec<f64> = (0..q).map(|j| beta[j] + scale * step[j]).collect();
            let nt: Vec<f64> = (0..k).map(|j| tau[j] + scale * step[q + j]).collect();
            let cand = search(&nb, &nt);
            if cand.ll.is_finite() && cand.ll >= cur.ll - 1e-12 * cur.ll.abs().max(1.0) {
                beta = nb;
                tau = nt;
                cur = cand;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let norm = beta
            .iter()
            .chain(theta_from_tau(&tau).iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm > SEPARATION_NORM {
            return Err(Error::Separation { norm });
        }
        if !accepted {
            break;
        }
    }
    let theta = theta_from_tau(&tau);
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            grad_norm: cur.g.amax(),
        });
    }
    let vcov = cholesky(&cur.neg_h)?.inverse();
    let all: Vec<f64> = beta.iter().chain(&theta).copied().collect();
    check_divergence(&all, &vcov)?;
    Ok(OrdinalFit {
        names: x.names.clone(),
        coefficients: beta,
        cutpoints: theta,
        link,
        vcov: mat_rows(&vcov),
        loglik: cur.ll,
        converged,
        iterations,
    })
}
