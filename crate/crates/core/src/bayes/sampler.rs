//! The Gibbs sampler.
//!
//! One iteration runs, in order:
//! 1. collapsed cutpoint update (decision latents integrated out, slice sampled),
//! 2. latent pairs (D*, Y*) by conditional sweeps inside their boxes,
//! 3. β | rest, 4. α | rest, 5. δ levels | rest, 6. θ | rest,
//! 7. translation along (β_Z, θ_1, D* of treated cases),
//! 8. rescaling of the decision block and of the risk block.
//!
//! Steps 1, 7 and 8 are exact moves that leave the posterior invariant; they
//! exist because the plain sweep moves cutpoints by roughly one order
//! statistic gap per iteration, and cannot leave a bad scale quickly.

use super::truncnorm::{draw_truncated_bivariate, draw_truncated_normal, truncated_mean, Interval};
use super::{parameter_names, GibbsConfig, GibbsState, PosteriorDraws};
use crate::data::encode::Design;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::Link;
use crate::numeric::linalg::{cholesky, full_column_rank, Mat, Vector};
use crate::numeric::normal::norm_cdf;
use crate::rng::{substream, StreamRng};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;

/// Data and constants shared by all chains.
struct Model {
    n: usize,
    p: usize,
    k: usize,
    z: Vec<u8>,
    d: Vec<usize>,
    y: Vec<u8>,
    x: Vec<f64>,
    v: Vec<f64>,
    /// Cholesky factors of the (fixed) β and α conditional precisions.
    chol_beta: Mat,
    chol_alpha: Mat,
    cells: [Vec<Vec<usize>>; 2],
    n_d: Vec<usize>,
    rho: f64,
    lambda_d: f64,
    lambda_r: f64,
    sigma0: f64,
}

impl Model {
    fn build(z: Vec<u8>, d: Vec<usize>, y: Vec<u8>, x: Vec<f64>, p: usize, k: usize, cfg: &GibbsConfig) -> Result<Self> {
        let n = z.len();
        let q = 2 * p + 1;
        let mut v = Vec::with_capacity(n * q);
        for i in 0..n {
            let zf = z[i] as f64;
            let xi = &x[i * p..(i + 1) * p];
            v.push(zf);
            v.extend_from_slice(xi);
            v.extend(xi.iter().map(|a| a * zf));
        }
        let one_m = 1.0 - cfg.rho * cfg.rho;
        let vm = Mat::from_row_slice(n, q, &v);
        let xm = Mat::from_row_slice(n, p, &x);
        if n > 0 && !full_column_rank(&vm) {
            return Err(Error::RankDeficient);
        }
        let pb = vm.transpose() * &vm / one_m + Mat::identity(q, q) * cfg.prior_precision_decision;
        let pa = xm.transpose() * &xm / one_m + Mat::identity(p, p) * cfg.prior_precision_risk;
        let chol_beta = cholesky(&pb)?.l();
        let chol_alpha = cholesky(&pa)?.l();
        let mut cells = [vec![Vec::new(); k + 1], vec![Vec::new(); k + 1]];
        let mut n_d = vec![0; k + 1];
        for i in 0..n {
            cells[z[i] as usize][d[i]].push(i);
            n_d[d[i]] += 1;
        }
        Ok(Self {
            n,
            p,
            k,
            z,
            d,
            y,
            x,
            v,
            chol_beta,
            chol_alpha,
            cells,
            n_d,
            rho: cfg.rho,
            lambda_d: cfg.prior_precision_decision,
            lambda_r: cfg.prior_precision_risk,
            sigma0: cfg.cutpoint_prior_sd,
        })
    }

    fn q(&self) -> usize {
        2 * self.p + 1
    }

    fn vrow(&self, i: usize) -> &[f64] {
        let q = self.q();
        &self.v[i * q..(i + 1) * q]
    }

    fn xrow(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn decision_mean(&self, s: &GibbsState, i: usize) -> f64 {
        dot(self.vrow(i), &s.beta)
    }

    fn risk_mean(&self, s: &GibbsState, i: usize) -> f64 {
        dot(self.xrow(i), &s.alpha) - s.delta[self.d[i]]
    }

    fn decision_box(&self, s: &GibbsState, i: usize) -> Interval {
        let th = &s.theta[self.z[i] as usize];
        let d = self.d[i];
        Interval::new(
            if d == 0 { f64::NEG_INFINITY } else { th[d - 1] },
            if d == self.k { f64::INFINITY } else { th[d] },
        )
    }

    fn outcome_box(&self, i: usize) -> Interval {
        if self.y[i] == 1 {
            Interval::new(0.0, f64::INFINITY)
        } else {
            Interval::new(f64::NEG_INFINITY, 0.0)
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn std_normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draw from N(P⁻¹b, P⁻¹) given the lower Cholesky factor of P.
fn draw_gaussian(l: &Mat, b: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    let dim = b.len();
    if dim == 0 {
        return Vec::new();
    }
    let bv = Vector::from_column_slice(b);
    let mut w = l.solve_lower_triangular(&bv).expect("triangular factor is non-singular");
    for j in 0..dim {
        w[j] += std_normal(rng);
    }
    l.tr_solve_lower_triangular(&w)
        .expect("triangular factor is non-singular")
        .iter()
        .copied()
        .collect()
}

/// ln(Φ(b) − Φ(a)) without cancellation.
fn log_interval(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    if a + b > 0.0 {
        return log_interval(-b, -a);
    }
    if b > -25.0 {
        // Direct difference is accurate unless the two tail areas nearly cancel.
        let fb = norm_cdf(b);
        let diff = fb - if a == f64::NEG_INFINITY { 0.0 } else { norm_cdf(a) };
        if diff > 1e-3 * fb {
            return diff.ln();
        }
    }
    let lb = Link::Probit.log_cdf(b);
    if a == f64::NEG_INFINITY {
        return lb;
    }
    let la = Link::Probit.log_cdf(a);
    lb + (-(la - lb).exp_m1()).ln()
}

/// Mean and precision of δ_l given the other levels (before truncation to
/// the neighbours). `sum` adds ρ·ε1 − (Y* − xα) over cases with D = l.
/// Sampling levels one at a time targets the same law as the joint draw of
/// (δ_0, gaps) under the cumulative-sum prior.
fn delta_level_conditional(count: usize, sum: f64, rho: f64, sigma0: f64) -> (f64, f64) {
    let om = 1.0 - rho * rho;
    let prec = count as f64 / om + 1.0 / (sigma0 * sigma0);
    (sum / om / prec, prec)
}

/// Univariate slice sampler (stepping out, then shrinkage) on (lo, hi).
fn slice_sample(
    x0: f64,
    w: f64,
    lo: f64,
    hi: f64,
    mut logf: impl FnMut(f64) -> f64,
    rng: &mut StreamRng,
) -> f64 {
    let f0 = logf(x0);
    if !f0.is_finite() {
        return x0;
    }
    let e: f64 = Exp1.sample(rng);
    let level = f0 - e;
    let mut left = x0 - w * rng.random::<f64>();
    let mut right = left + w;
    for _ in 0..32 {
        if left <= lo || logf(left) <= level {
            break;
        }
        left -= w;
    }
    for _ in 0..32 {
        if right >= hi || logf(right) <= level {
            break;
        }
        right += w;
    }
    left = left.max(lo);
    right = right.min(hi);
    for _ in 0..200 {
        let x1 = left + (right - left) * rng.random::<f64>();
        if x1 > lo && x1 < hi && logf(x1) > level {
            return x1;
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
    }
    x0
}

/// Scale factor g > 0 targeting g^(m−1) exp(−a g²/2 + b g). The current
/// state sits at g = 1, so for b ≠ 0 one slice step started there is a valid
/// kernel along the orbit.
fn draw_scale(m: f64, a: f64, b: f64, rng: &mut StreamRng) -> f64 {
    if !(a > 0.0) || !(m > 0.0) {
        return 1.0;
    }
    if b == 0.0 {
        let g2 = Gamma::new(0.5 * m, 2.0 / a).expect("positive shape and scale").sample(rng);
        return g2.sqrt();
    }
    // In u = ln g the density is exp(m u − a e^{2u}/2 + b e^u).
    let logf = |u: f64| m * u - 0.5 * a * (2.0 * u).exp() + b * u.exp();
    slice_sample(0.0, 2.0 / m.sqrt(), f64::NEG_INFINITY, f64::INFINITY, logf, rng).exp()
}

/// Initial state: parameters from their priors, cutpoints mapped into the
/// range of the initial decision index, latents at truncated means.
fn initial_state(m: &Model, rng: &mut StreamRng) -> GibbsState {
    let q = m.q();
    let sd_d = 1.0 / m.lambda_d.sqrt();
    let sd_r = 1.0 / m.lambda_r.sqrt();
    let beta: Vec<f64> = (0..q).map(|_| sd_d * std_normal(rng)).collect();
    let alpha: Vec<f64> = (0..m.p).map(|_| sd_r * std_normal(rng)).collect();
    let sorted_prior = |len: usize, rng: &mut StreamRng| {
        let mut t: Vec<f64> = (0..len).map(|_| m.sigma0 * std_normal(rng)).collect();
        t.sort_by(f64::total_cmp);
        t
    };
    let delta = sorted_prior(m.k + 1, rng);
    let mut theta = [sorted_prior(m.k, rng), sorted_prior(m.k, rng)];
    if m.n > 0 {
        let idx: Vec<f64> = (0..m.n).map(|i| dot(m.vrow(i), &beta)).collect();
        let lo = idx.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = idx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi - lo > 1e-8 { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        for th in theta.iter_mut() {
            for t in th.iter_mut() {
                *t = lo + (hi - lo) * norm_cdf(*t / m.sigma0);
            }
            for j in 1..th.len() {
                if th[j] <= th[j - 1] {
                    th[j] = th[j - 1] + 1e-6 * (hi - lo);
                }
            }
        }
    }
    let mut s = GibbsState {
        beta,
        alpha,
        theta,
        delta,
        d_star: vec![0.0; m.n],
        y_star: vec![0.0; m.n],
    };
    for i in 0..m.n {
        let bd = m.decision_box(&s, i);
        let by = m.outcome_box(i);
        s.d_star[i] = truncated_mean(m.decision_mean(&s, i), 1.0, bd.lo, bd.hi);
        s.y_star[i] = truncated_mean(m.risk_mean(&s, i), 1.0, by.lo, by.hi);
    }
    s
}

struct Chain<'a> {
    m: &'a Model,
    s: GibbsState,
    rng: StreamRng,
    sweeps: usize,
    moves: bool,
}

impl Chain<'_> {
    fn one_minus(&self) -> f64 {
        1.0 - self.m.rho * self.m.rho
    }

    fn step(&mut self) -> Result<()> {
        if self.moves && self.m.n > 0 {
            self.collapsed_cutpoints();
        }
        self.latents()?;
        self.update_beta();
        self.update_alpha();
        self.update_delta()?;
        self.update_theta()?;
        if self.moves {
            self.translate();
            self.rescale();
        }
        Ok(())
    }

    fn latents(&mut self) -> Result<()> {
        let m = self.m;
        for i in 0..m.n {
            let (d, y) = draw_truncated_bivariate(
                m.decision_mean(&self.s, i),
                m.risk_mean(&self.s, i),
                m.rho,
                m.decision_box(&self.s, i),
                m.outcome_box(i),
                (self.s.d_star[i], self.s.y_star[i]),
                self.sweeps,
                &mut self.rng,
            )?;
            self.s.d_star[i] = d;
            self.s.y_star[i] = y;
        }
        Ok(())
    }

    fn update_beta(&mut self) {
        let m = self.m;
        let q = m.q();
        let mut b = vec![0.0; q];
        let c = 1.0 / self.one_minus();
        for i in 0..m.n {
            let e2 = self.s.y_star[i] - m.risk_mean(&self.s, i);
            let t = (self.s.d_star[i] - m.rho * e2) * c;
            for (bj, vj) in b.iter_mut().zip(m.vrow(i)) {
                *bj += vj * t;
            }
        }
        self.s.beta = draw_gaussian(&m.chol_beta, &b, &mut self.rng);
    }

    fn update_alpha(&mut self) {
        let m = self.m;
        let mut b = vec![0.0; m.p];
        let c = 1.0 / self.one_minus();
        for i in 0..m.n {
            let e1 = self.s.d_star[i] - m.decision_mean(&self.s, i);
            let t = (self.s.y_star[i] + self.s.delta[m.d[i]] - m.rho * e1) * c;
            for (bj, xj) in b.iter_mut().zip(m.xrow(i)) {
                *bj += xj * t;
            }
        }
        self.s.alpha = draw_gaussian(&m.chol_alpha, &b, &mut self.rng);
    }

    fn update_delta(&mut self) -> Result<()> {
        let m = self.m;
        let k = m.k;
        let mut sums = vec![0.0; k + 1];
        for i in 0..m.n {
            let e1 = self.s.d_star[i] - m.decision_mean(&self.s, i);
            let r = self.s.y_star[i] - dot(m.xrow(i), &self.s.alpha);
            sums[m.d[i]] += m.rho * e1 - r;
        }
        for l in 0..=k {
            let (mu, prec) = delta_level_conditional(m.n_d[l], sums[l], m.rho, m.sigma0);
            let lo = if l == 0 { f64::NEG_INFINITY } else { self.s.delta[l - 1] };
            let hi = if l == k { f64::INFINITY } else { self.s.delta[l + 1] };
            self.s.delta[l] = if lo < hi {
                draw_truncated_normal(mu, prec.sqrt().recip(), lo, hi, &mut self.rng)?
            } else {
                lo
            };
        }
        Ok(())
    }

    fn update_theta(&mut self) -> Result<()> {
        let m = self.m;
        let k = m.k;
        for z in 0..2 {
            for j in 1..=k {
                let th = &self.s.theta[z];
                let mut lo = if j == 1 { f64::NEG_INFINITY } else { th[j - 2] };
                let mut hi = if j == k { f64::INFINITY } else { th[j] };
                for &i in &m.cells[z][j - 1] {
                    lo = lo.max(self.s.d_star[i]);
                }
                for &i in &m.cells[z][j] {
                    hi = hi.min(self.s.d_star[i]);
                }
                if !(lo < hi) {
                    continue;
                }
                self.s.theta[z][j - 1] = draw_truncated_normal(0.0, m.sigma0, lo, hi, &mut self.rng)?;
            }
        }
        Ok(())
    }

    /// Slice-sampled θ_zj from its conditional with every decision latent
    /// integrated out (given Y*). The next latent step redraws D* exactly,
    /// which completes the block.
    fn collapsed_cutpoints(&mut self) {
        let m = self.m;
        let k = m.k;
        let s = self.one_minus().sqrt();
        let var0 = m.sigma0 * m.sigma0;
        for z in 0..2 {
            for j in 1..=k {
                let below = &m.cells[z][j - 1];
                let above = &m.cells[z][j];
                let centre = |i: usize| {
                    let my = m.risk_mean(&self.s, i);
                    m.decision_mean(&self.s, i) + m.rho * (self.s.y_star[i] - my)
                };
                let cb: Vec<f64> = below.iter().map(|&i| centre(i) / s).collect();
                let ca: Vec<f64> = above.iter().map(|&i| centre(i) / s).collect();
                let th = &self.s.theta[z];
                let lo = if j == 1 { f64::NEG_INFINITY } else { th[j - 2] };
                let hi = if j == k { f64::INFINITY } else { th[j] };
                let (los, his) = (lo / s, hi / s);
                let logf = |t: f64| {
                    let ts = t / s;
                    let mut acc = -0.5 * t * t / var0;
                    for &c in &cb {
                        acc += log_interval(los - c, ts - c);
                    }
                    for &c in &ca {
                        acc += log_interval(ts - c, his - c);
                    }
                    acc
                };
                let w = 4.0 * s / ((cb.len() + ca.len()) as f64 + 1.0).sqrt();
                let x0 = th[j - 1];
                self.s.theta[z][j - 1] = slice_sample(x0, w, lo, hi, logf, &mut self.rng);
            }
        }
    }

    /// Shift β_Z, θ_1 and the treated-arm decision latents together; the
    /// likelihood is flat along this direction, so only the priors matter.
    fn translate(&mut self) {
        let m = self.m;
        let kf = m.k as f64;
        let prior = 1.0 / (m.sigma0 * m.sigma0);
        let prec = m.lambda_d + kf * prior;
        let sum_t: f64 = self.s.theta[1].iter().sum();
        let mean = -(m.lambda_d * self.s.beta[0] + sum_t * prior) / prec;
        let c = mean + std_normal(&mut self.rng) / prec.sqrt();
        self.s.beta[0] += c;
        for t in self.s.theta[1].iter_mut() {
            *t += c;
        }
        for i in 0..m.n {
            if m.z[i] == 1 {
                self.s.d_star[i] += c;
            }
        }
    }

    /// Rescale each latent equation's unobserved scale, one block at a time.
    fn rescale(&mut self) {
        let m = self.m;
        let om = self.one_minus();
        let prior = 1.0 / (m.sigma0 * m.sigma0);
        let residuals = |st: &GibbsState| -> (f64, f64, f64) {
            let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
            for i in 0..m.n {
                let e1 = st.d_star[i] - m.decision_mean(st, i);
                let e2 = st.y_star[i] - m.risk_mean(st, i);
                s11 += e1 * e1;
                s12 += e1 * e2;
                s22 += e2 * e2;
            }
            (s11, s12, s22)
        };

        let (s11, s12, _) = residuals(&self.s);
        let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let a = s11 / om + m.lambda_d * sq(&self.s.beta) + prior * (sq(&self.s.theta[0]) + sq(&self.s.theta[1]));
        let b = m.rho * s12 / om;
        let dim = (m.n + m.q() + 2 * m.k) as f64;
        let g = draw_scale(dim, a, b, &mut self.rng);
        self.s.beta.iter_mut().for_each(|v| *v *= g);
        self.s.theta.iter_mut().flatten().for_each(|v| *v *= g);
        self.s.d_star.iter_mut().for_each(|v| *v *= g);

        let (_, s12, s22) = residuals(&self.s);
        let a = s22 / om + m.lambda_r * sq(&self.s.alpha) + prior * sq(&self.s.delta);
        let b = m.rho * s12 / om;
        let dim = (m.n + m.p + m.k + 1) as f64;
        let g = draw_scale(dim, a, b, &mut self.rng);
        self.s.alpha.iter_mut().for_each(|v| *v *= g);
        self.s.delta.iter_mut().for_each(|v| *v *= g);
        self.s.y_star.iter_mut().for_each(|v| *v *= g);
    }

    fn finite(&self) -> bool {
        let s = &self.s;
        s.beta.iter().chain(&s.alpha).chain(s.theta.iter().flatten()).chain(&s.delta).all(|v| v.is_finite())
    }
}

fn run_chain(m: &Model, cfg: &GibbsConfig, chain: usize) -> Result<Vec<f64>> {
    let mut rng = substream(cfg.seed, "bayes.chain", chain as u64);
    let s = initial_state(m, &mut rng);
    let mut ch = Chain {
        m,
        s,
        rng,
        sweeps: cfg.latent_sweeps,
        moves: cfg.mixing_moves,
    };
    let keep = cfg.retained();
    let start = cfg.iterations - keep;
    let dim = 3 * m.p + 1 + 3 * m.k + 1;
    let mut out = Vec::with_capacity(keep * dim);
    for it in 0..cfg.iterations {
        ch.step()?;
        if !ch.finite() {
            return Err(Error::NonFiniteState { chain, iteration: it });
        }
        if it >= start {
            let s = &ch.s;
            assert!(
                s.theta.iter().all(|t| t.windows(2).all(|w| w[0] <= w[1])) && s.delta.windows(2).all(|w| w[0] <= w[1]),
                "cutpoint ordering violated at chain {chain}, iteration {it}"
            );
            out.extend(s.params());
        }
    }
    Ok(out)
}

fn run_model(m: &Model, cfg: &GibbsConfig, outcome: &str, covariate_names: Vec<String>) -> Result<PosteriorDraws> {
    let chains: Vec<Vec<f64>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(m, cfg, c))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    if cfg.rho.abs() >= 0.99 {
        warnings.push(format!("error correlation {} is close to singular", cfg.rho));
    }
    Ok(PosteriorDraws {
        outcome: outcome.to_string(),
        names: parameter_names(&covariate_names, m.k),
        covariate_names,
        p: m.p,
        k: m.k,
        rho: cfg.rho,
        config: cfg.clone(),
        chains,
        warnings,
    })
}

/// Posterior draws for one outcome. `design` holds the covariate columns
/// (no intercept); treatment main effect and interactions are added here.
pub fn gibbs_run(ds: &Dataset, outcome: &str, design: &Design, config: &GibbsConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    if design.nrows() != ds.len() {
        return Err(Error::LengthMismatch {
            expected: ds.len(),
            got: design.nrows(),
        });
    }
    let y = ds.outcome(outcome)?;
    let z = ds.z();
    let d = ds.d();
    let k = ds.k();
    for arm in 0..2u8 {
        for dd in 0..=k {
            if !z.iter().zip(&d).any(|(&zi, &di)| zi == arm && di == dd) {
                return Err(Error::EmptyDecisionCell { z: arm, d: dd });
            }
        }
    }
    let p = design.ncols();
    let x: Vec<f64> = (0..design.nrows()).flat_map(|i| design.row(i).to_vec()).collect();
    let m = Model::build(z, d, y, x, p, k, config)?;
    run_model(&m, config, outcome, design.names.clone())
}

/// The same chain with the likelihood switched off: draws follow the prior.
pub fn gibbs_prior_only(p: usize, k: usize, config: &GibbsConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let m = Model::build(Vec::new(), Vec::new(), Vec::new(), Vec::new(), p, k, config)?;
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    run_model(&m, config, "", names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::stats::{mean, variance};

    #[test]
    fn level_conditionals_match_gap_parameterization() {
        use rand::Rng;
        // Gap space: precision Σ WᵀW/(1−ρ²) + CᵀC/σ0², linear term Σ Wᵀs/(1−ρ²),
        // with δ = C·g and C lower triangular ones.
        let (k, rho, sigma0) = (3usize, 0.35, 2.0);
        let mut rng = substream(9, "gap", 0);
        let n = 40;
        let d: Vec<usize> = (0..n).map(|_| rng.random_range(0..=k)).collect();
        let sv: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let om = 1.0 - rho * rho;
        let dim = k + 1;
        let c = Mat::from_fn(dim, dim, |i, j| if j <= i { 1.0 } else { 0.0 });
        let mut pg = c.transpose() * &c / (sigma0 * sigma0);
        let mut bg = Vector::zeros(dim);
        for i in 0..n {
            let w = Vector::from_fn(dim, |j, _| if j == 0 || d[i] >= j { 1.0 } else { 0.0 });
            pg += &w * w.transpose() / om;
            bg += &w * (sv[i] / om);
        }
        // Transform to levels: P_lev = C⁻ᵀ P_g C⁻¹, mean_lev = C P_g⁻¹ b_g.
        let ci = c.clone().try_inverse().unwrap();
        let plev = ci.transpose() * &pg * &ci;
        let mlev = &c * pg.clone().try_inverse().unwrap() * &bg;
        let others: Vec<f64> = (0..dim).map(|j| j as f64 * 0.3 - 0.2).collect();
        for l in 0..dim {
            let count = d.iter().filter(|&&v| v == l).count();
            let sum: f64 = (0..n).filter(|&i| d[i] == l).map(|i| sv[i]).sum();
            let (mu, prec) = delta_level_conditional(count, sum, rho, sigma0);
            let mut cond = mlev[l];
            for j in 0..dim {
                if j != l {
                    cond -= plev[(l, j)] / plev[(l, l)] * (others[j] - mlev[j]);
                }
            }
            assert!((prec - plev[(l, l)]).abs() < 1e-10);
            assert!((mu - cond).abs() < 1e-10);
        }
    }

    #[test]
    fn log_interval_matches_direct() {
        for &(a, b) in &[(-1.0, 0.5), (2.0, 3.0), (-3.0, -2.0), (f64::NEG_INFINITY, 0.3), (0.2, f64::INFINITY)] {
            let direct = (norm_cdf(b) - norm_cdf(a)).ln();
            assert!((log_interval(a, b) - direct).abs() < 1e-12, "({a},{b})");
        }
        assert!(log_interval(30.0, 31.0).is_finite());
        assert!(log_interval(-31.0, -30.0).is_finite());
        assert_eq!(log_interval(1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn scale_draw_ratio_of_moments() {
        // For b = 0, g² ~ Gamma(m/2, rate a/2), so E[g²] = m / a.
        let mut rng = substream(5, "scale", 0);
        let g2: Vec<f64> = (0..50_000).map(|_| draw_scale(40.0, 10.0, 0.0, &mut rng).powi(2)).collect();
        assert!((mean(&g2) - 4.0).abs() < 0.03);
        // Slice path, checked against a grid integral.
        let (m, a, b) = (30.0, 25.0, 3.0);
        let f = |g: f64| ((m - 1.0) * g.ln() - 0.5 * a * g * g + b * g).exp();
        let h = 1e-4;
        let (mut z0, mut z1) = (0.0, 0.0);
        for i in 1..40_000 {
            let g = i as f64 * h;
            z0 += f(g);
            z1 += g * f(g);
        }
        // Chain the slice kernel on ln g, as the sampler does along the orbit.
        let logf = |u: f64| m * u - 0.5 * a * (2.0 * u).exp() + b * u.exp();
        let mut u = 0.0;
        let gs: Vec<f64> = (0..50_000)
            .map(|_| {
                u = slice_sample(u, 2.0 / m.sqrt(), f64::NEG_INFINITY, f64::INFINITY, logf, &mut rng);
                u.exp()
            })
            .collect();
        let sd = variance(&gs).sqrt() / (gs.len() as f64).sqrt();
        assert!((mean(&gs) - z1 / z0).abs() < 5.0 * sd);
    }
}
