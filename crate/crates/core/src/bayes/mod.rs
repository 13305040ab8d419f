//! Bivariate ordinal probit for (decision, latent risk) fitted by Gibbs
//! sampling, with the error correlation `rho` held fixed as a sensitivity
//! parameter.
//!
//! Model, per case i with treatment z and covariates x:
//!
//! ```text
//! D*(z) = β_Z z + xβ_X + z·xβ_ZX + ε1      D(z) = #{j : θ_zj < D*(z)}
//! R*    = xα + ε2                          R    = #{l : δ_l < R*}
//! corr(ε1, ε2) = rho,  Y = 1{R > D}
//! ```

mod archive;
mod npsens;
mod sampler;
mod summary;
pub mod truncnorm;

pub use archive::{read_draws, write_draws};
pub use npsens::{np_sensitivity, unconfounded_plugin, DecisionFn, DecisionModel, OutcomeModel, StratumDecisionTable, XiTable};
pub use sampler::{gibbs_prior_only, gibbs_run};
pub use summary::{
    case_joint, posterior_apce, sensitivity_grid, DrawSummary, PosteriorApce, SensitivityEntry,
};
pub(crate) use summary::check_dims;
pub use truncnorm::{draw_truncated_bivariate, draw_truncated_normal, Interval};

use crate::error::{Error, Result};
use crate::numeric::stats::{mean, variance};
use serde::{Deserialize, Serialize};

/// Sampler settings. Prior precisions apply to every coefficient of the
/// decision (β) and risk (α) equations; cutpoints get independent
/// N(0, σ0²) priors restricted to the ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub rho: f64,
    pub chains: usize,
    pub iterations: usize,
    pub burn_fraction: f64,
    pub prior_precision_decision: f64,
    pub prior_precision_risk: f64,
    pub cutpoint_prior_sd: f64,
    pub seed: u64,
    /// Gibbs scans per latent pair update.
    pub latent_sweeps: usize,
    /// Extra exact moves (collapsed cutpoints, translation, rescaling).
    /// Switching them off leaves only the plain full-conditional sweep.
    pub mixing_moves: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            rho: 0.0,
            chains: 4,
            iterations: 5000,
            burn_fraction: 0.5,
            prior_precision_decision: 0.01,
            prior_precision_risk: 0.01,
            cutpoint_prior_sd: 10.0,
            seed: 1,
            latent_sweeps: 2,
            mixing_moves: true,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.rho.abs() < 1.0) {
            return bad(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        if self.chains == 0 {
            return bad("chains must be at least 1".into());
        }
        if self.iterations < 2 {
            return bad(format!("iterations must be at least 2, got {}", self.iterations));
        }
        if !(self.burn_fraction > 0.0 && self.burn_fraction < 1.0) {
            return bad(format!("burn_fraction must lie in (0, 1), got {}", self.burn_fraction));
        }
        for (name, v) in [
            ("prior_precision_decision", self.prior_precision_decision),
            ("prior_precision_risk", self.prior_precision_risk),
            ("cutpoint_prior_sd", self.cutpoint_prior_sd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Draws kept per chain.
    pub fn retained(&self) -> usize {
        (self.iterations as f64 * (1.0 - self.burn_fraction)).ceil() as usize
    }
}

/// Full sampler state.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub theta: [Vec<f64>; 2],
    pub delta: Vec<f64>,
    pub d_star: Vec<f64>,
    pub y_star: Vec<f64>,
}

impl GibbsState {
    /// Parameter vector in archive order: β, α, θ0, θ1, δ.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + self.alpha.len() + 3 * self.delta.len());
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.theta[0]);
        v.extend_from_slice(&self.theta[1]);
        v.extend_from_slice(&self.delta);
        v
    }
}

/// Borrowed view of one parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct DrawView<'a> {
    pub beta: &'a [f64],
    pub alpha: &'a [f64],
    pub theta: [&'a [f64]; 2],
    pub delta: &'a [f64],
}

impl<'a> DrawView<'a> {
    pub fn split(v: &'a [f64], p: usize, k: usize) -> Self {
        let (beta, rest) = v.split_at(2 * p + 1);
        let (alpha, rest) = rest.split_at(p);
        let (t0, rest) = rest.split_at(k);
        let (t1, delta) = rest.split_at(k);
        Self {
            beta,
            alpha,
            theta: [t0, t1],
            delta,
        }
    }

    /// Linear predictor of the decision latent at treatment z.
    pub fn decision_index(&self, x: &[f64], z: u8) -> f64 {
        let p = x.len();
        let zf = z as f64;
        let mut m = self.beta[0] * zf;
        for j in 0..p {
            m += x[j] * (self.beta[1 + j] + zf * self.beta[1 + p + j]);
        }
        m
    }

    pub fn risk_index(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.alpha).map(|(a, b)| a * b).sum()
    }
}

/// Retained draws, one flat row-major array per chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub outcome: String,
    pub covariate_names: Vec<String>,
    pub names: Vec<String>,
    pub p: usize,
    pub k: usize,
    pub rho: f64,
    pub config: GibbsConfig,
    pub chains: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    /// Single-chain container around fixed parameter vectors (known truth,
    /// point estimates, or externally produced draws).
    pub fn from_vectors(
        outcome: &str,
        covariate_names: Vec<String>,
        k: usize,
        rho: f64,
        vectors: &[Vec<f64>],
    ) -> Result<Self> {
        let p = covariate_names.len();
        let dim = 3 * p + 1 + 3 * k + 1;
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, expected {dim}",
                v.len()
            )));
        }
        Ok(Self {
            outcome: outcome.to_string(),
            names: parameter_names(&covariate_names, k),
            covariate_names,
            p,
            k,
            rho,
            config: GibbsConfig {
                rho,
                chains: 1,
                iterations: vectors.len(),
                burn_fraction: 0.0,
                ..GibbsConfig::default()
            },
            chains: vec![vectors.concat()],
            warnings: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        3 * self.p + 1 + 3 * self.k + 1
    }

    /// Draws per chain.
    pub fn per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.len() / self.dim())
    }

    pub fn total(&self) -> usize {
        self.per_chain() * self.chains.len()
    }

    pub fn draw(&self, chain: usize, t: usize) -> &[f64] {
        let dim = self.dim();
        &self.chains[chain][t * dim..(t + 1) * dim]
    }

    pub fn view(&self, chain: usize, t: usize) -> DrawView<'_> {
        DrawView::split(self.draw(chain, t), self.p, self.k)
    }

    /// Scalar trace of parameter `j` for one chain.
    pub fn series(&self, chain: usize, j: usize) -> Vec<f64> {
        let dim = self.dim();
        self.chains[chain].iter().skip(j).step_by(dim).copied().collect()
    }

    /// Trace of parameter `j` pooled over chains.
    pub fn pooled(&self, j: usize) -> Vec<f64> {
        (0..self.chains.len()).flat_map(|c| self.series(c, j)).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Up to `max` draws spread evenly over the pooled sample, in
    /// chain-major order. `max = 0` keeps everything.
    pub fn thinned(&self, max: usize) -> Vec<DrawView<'_>> {
        let per = self.per_chain();
        let total = self.total();
        let take = if max == 0 || max >= total { total } else { max };
        (0..take)
            .map(|i| {
                let g = if take == total { i } else { i * total / take };
                self.view(g / per, g % per)
            })
            .collect()
    }

    /// Split-R̂ for every parameter; empty when fewer than two chains.
    pub fn rhat(&self) -> Vec<(String, f64)> {
        if self.chains.len() < 2 || self.per_chain() < 10 {
            return Vec::new();
        }
        (0..self.dim())
            .map(|j| {
                let traces: Vec<Vec<f64>> = (0..self.chains.len()).map(|c| self.series(c, j)).collect();
                (self.names[j].clone(), gelman_rubin(&traces).unwrap_or(f64::NAN))
            })
            .collect()
    }

    /// Posterior mean and central 95% interval per parameter.
    pub fn parameter_summary(&self) -> Vec<DrawSummary> {
        (0..self.dim())
            .map(|j| DrawSummary::from_draws(&self.names[j], &self.pooled(j)))
            .collect()
    }
}

/// Parameter labels in archive order.
pub fn parameter_names(covariates: &[String], k: usize) -> Vec<String> {
    let mut names = vec!["beta[z]".to_string()];
    names.extend(covariates.iter().map(|c| format!("beta[{c}]")));
    names.extend(covariates.iter().map(|c| format!("beta[z:{c}]")));
    names.extend(covariates.iter().map(|c| format!("alpha[{c}]")));
    for z in 0..2 {
        names.extend((1..=k).map(|j| format!("theta{z}[{j}]")));
    }
    names.extend((0..=k).map(|l| format!("delta[{l}]")));
    names
}

/// Split-R̂. Each chain is cut into halves (the middle draw of an odd
/// chain is dropped) and the classic between/within ratio is computed over
/// the halves. All-constant input yields 1.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::TooFewChains {
            needed: 2,
            got: chains.len(),
        });
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch("chains differ in length".into()));
    }
    if n < 10 {
        return Err(Error::InvalidArgument(format!("chains need at least 10 draws, got {n}")));
    }
    let half = n / 2;
    let pieces: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect();
    let means: Vec<f64> = pieces.iter().map(|s| mean(s)).collect();
    let w = pieces.iter().map(|s| variance(s)).sum::<f64>() / pieces.len() as f64;
    let b_over_n = variance(&means);
    if w <= 0.0 {
        return Ok(if b_over_n <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_chains(m: usize, n: usize, shift: f64) -> Vec<Vec<f64>> {
        let mut rng = substream(11, "rhat", 0);
        (0..m)
            .map(|c| {
                (0..n)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) + if c == 0 { shift } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn rhat_iid_chains_near_one() {
        let r = gelman_rubin(&normal_chains(4, 10_000, 0.0)).unwrap();
        assert!(r < 1.01, "{r}");
    }

    #[test]
    fn rhat_detects_shifted_chain() {
        let r = gelman_rubin(&normal_chains(4, 1000, 5.0)).unwrap();
        assert!(r > 1.5, "{r}");
    }

    #[test]
    fn rhat_constant_chains() {
        let c = vec![vec![2.0; 50]; 3];
        assert_eq!(gelman_rubin(&c).unwrap(), 1.0);
        assert!(matches!(gelman_rubin(&c[..1]), Err(Error::TooFewChains { .. })));
    }

    #[test]
    fn config_checks() {
        let mut c = GibbsConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.retained(), 2500);
        c.iterations = 5;
        c.burn_fraction = 0.5;
        assert_eq!(c.retained(), 3);
        c.rho = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn names_match_layout() {
        let names = parameter_names(&["a".into(), "b".into()], 2);
        assert_eq!(names.len(), 3 * 2 + 1 + 3 * 2 + 1);
        assert_eq!(names[0], "beta[z]");
        assert_eq!(names[names.len() - 1], "delta[2]");
    }
}
