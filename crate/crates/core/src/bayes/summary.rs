//! Posterior causal summaries computed draw by draw.

use super::{gibbs_run, DrawView, GibbsConfig, PosteriorDraws};
use crate::data::encode::Design;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::stats::{mean, quantile_sorted};
use crate::numeric::{bvn_cdf, norm_cdf};
use crate::weights::{ApceEstimate, DecisionTarget};
use rayon::prelude::*;
use serde::Serialize;

/// Posterior mean with a central 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawSummary {
    pub name: String,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl DrawSummary {
    pub fn from_draws(name: &str, draws: &[f64]) -> Self {
        let mut v: Vec<f64> = draws.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return Self {
                name: name.to_string(),
                mean: f64::NAN,
                lo: f64::NAN,
                hi: f64::NAN,
            };
        }
        v.sort_by(f64::total_cmp);
        Self {
            name: name.to_string(),
            mean: mean(&v),
            lo: quantile_sorted(&v, 0.025),
            hi: quantile_sorted(&v, 0.975),
        }
    }
}

fn joint_cdf(u: f64, v: f64, rho: f64) -> f64 {
    if u == f64::NEG_INFINITY || v == f64::NEG_INFINITY {
        0.0
    } else if u == f64::INFINITY {
        norm_cdf(v)
    } else if v == f64::INFINITY {
        norm_cdf(u)
    } else {
        bvn_cdf(u, v, rho)
    }
}

/// Pr(D(z) = d, R = r | x) written into `out[d * (k+2) + r]`.
pub fn case_joint(view: &DrawView, x: &[f64], z: u8, rho: f64, out: &mut [f64]) {
    let k = view.delta.len() - 1;
    let m = view.decision_index(x, z);
    let a = view.risk_index(x);
    let th = view.theta[z as usize];
    let u = |j: usize| match j {
        0 => f64::NEG_INFINITY,
        j if j == k + 1 => f64::INFINITY,
        j => th[j - 1] - m,
    };
    let v = |l: usize| match l {
        0 => f64::NEG_INFINITY,
        l if l == k + 2 => f64::INFINITY,
        l => view.delta[l - 1] - a,
    };
    if rho == 0.0 {
        // Independent errors: outer product of the two marginals.
        let cd: Vec<f64> = (0..k + 2).map(|j| norm_cdf(u(j))).collect();
        let cr: Vec<f64> = (0..k + 3).map(|l| norm_cdf(v(l))).collect();
        for d in 0..=k {
            let pd = cd[d + 1] - cd[d];
            for r in 0..k + 2 {
                out[d * (k + 2) + r] = pd * (cr[r + 1] - cr[r]);
            }
        }
        return;
    }
    let w = k + 3;
    let mut grid = vec![0.0; (k + 2) * w];
    for i in 0..k + 2 {
        for j in 0..w {
            grid[i * w + j] = joint_cdf(u(i), v(j), rho);
        }
    }
    for d in 0..=k {
        for r in 0..k + 2 {
            out[d * (k + 2) + r] =
                grid[(d + 1) * w + r + 1] - grid[d * w + r + 1] - grid[(d + 1) * w + r] + grid[d * w + r];
        }
    }
}

/// Draw-level accumulation over a set of cases: `joint[z][d*(k+2)+r]` sums
/// Pr(D(z)=d, R=r | x_i), `risk[r]` sums Pr(R=r | x_i).
pub(crate) struct CaseTotals {
    pub joint: [Vec<f64>; 2],
    pub risk: Vec<f64>,
}

pub(crate) fn case_totals(view: &DrawView, design: &Design, cases: &[usize], rho: f64) -> CaseTotals {
    let k = view.delta.len() - 1;
    let size = (k + 1) * (k + 2);
    let mut joint = [vec![0.0; size], vec![0.0; size]];
    let mut risk = vec![0.0; k + 2];
    let mut buf = vec![0.0; size];
    for &i in cases {
        let x = design.row(i);
        for z in 0..2u8 {
            case_joint(view, x, z, rho, &mut buf);
            for (acc, b) in joint[z as usize].iter_mut().zip(&buf) {
                *acc += b;
            }
            if z == 0 {
                for d in 0..=k {
                    for r in 0..k + 2 {
                        risk[r] += buf[d * (k + 2) + r];
                    }
                }
            }
        }
    }
    CaseTotals { joint, risk }
}

pub(crate) fn check_dims(draws: &PosteriorDraws, design: &Design, keep: Option<&[bool]>) -> Result<Vec<usize>> {
    if design.ncols() != draws.p {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, draws expect {}",
            design.ncols(),
            draws.p
        )));
    }
    if let Some(m) = keep {
        if m.len() != design.nrows() {
            return Err(Error::LengthMismatch {
                expected: design.nrows(),
                got: m.len(),
            });
        }
    }
    let cases: Vec<usize> = (0..design.nrows()).filter(|&i| keep.is_none_or(|m| m[i])).collect();
    if cases.is_empty() {
        return Err(Error::EmptySubset);
    }
    Ok(cases)
}

/// Per-draw effects: APCE(d, r) for every cell, APCEp(r), APCEs, shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorApce {
    pub outcome: String,
    pub rho: f64,
    pub estimates: Vec<ApceEstimate>,
    pub proportions: Vec<DrawSummary>,
    /// `apce_p_draws[r - 1]` over draws.
    pub apce_p_draws: Vec<Vec<f64>>,
    pub apce_s_draws: Vec<f64>,
    /// `proportion_draws[r]` over draws.
    pub proportion_draws: Vec<Vec<f64>>,
    /// Σ_r APCEp(r)·Pr(R=r) per draw: the reduction in negative outcomes.
    pub reduction_draws: Vec<f64>,
}

impl PosteriorApce {
    pub fn apce_p(&self, r: usize) -> Option<&ApceEstimate> {
        let label = DecisionTarget::AtLeast(r).label();
        self.estimates.iter().find(|e| e.stratum == r && e.decision == label)
    }

    pub fn apce_s(&self) -> Option<&ApceEstimate> {
        self.estimates.iter().find(|e| e.stratum == 0 && e.decision == "=0")
    }
}

/// Average over the selected cases (all when `keep` is None) using at most
/// `max_draws` posterior draws (0 = all).
pub fn posterior_apce(
    draws: &PosteriorDraws,
    design: &Design,
    keep: Option<&[bool]>,
    max_draws: usize,
) -> Result<PosteriorApce> {
    let cases = check_dims(draws, design, keep)?;
    let k = draws.k;
    let nf = cases.len() as f64;
    let views = draws.thinned(max_draws);
    // Per draw: APCE grid [d*(k+2)+r], APCEp, shares.
    let per: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = views
        .par_iter()
        .map(|view| {
            let t = case_totals(view, design, &cases, draws.rho);
            let grid: Vec<f64> = (0..(k + 1) * (k + 2))
                .map(|c| (t.joint[1][c] - t.joint[0][c]) / t.risk[c % (k + 2)])
                .collect();
            let ap: Vec<f64> = (1..=k)
                .map(|r| {
                    let at = |z: usize| (r..=k).map(|d| t.joint[z][d * (k + 2) + r]).sum::<f64>();
                    (at(1) - at(0)) / t.risk[r]
                })
                .collect();
            let shares: Vec<f64> = t.risk.iter().map(|v| v / nf).collect();
            (grid, ap, shares)
        })
        .collect();

    let nd = per.len();
    let column = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..nd).map(f).collect() };
    let mut estimates = Vec::new();
    let est = |stratum: usize, target: DecisionTarget, v: &[f64]| {
        let s = DrawSummary::from_draws("", v);
        ApceEstimate {
            outcome: draws.outcome.clone(),
            stratum,
            decision: target.label(),
            point: s.mean,
            ci_low: s.lo,
            ci_high: s.hi,
            method: "bayes",
        }
    };
    let apce_p_draws: Vec<Vec<f64>> = (0..k).map(|j| column(&|t| per[t].1[j])).collect();
    for r in 1..=k {
        estimates.push(est(r, DecisionTarget::AtLeast(r), &apce_p_draws[r - 1]));
    }
    let apce_s_draws = column(&|t| per[t].0[0]);
    for d in 0..=k {
        for r in 0..k + 2 {
            estimates.push(est(r, DecisionTarget::Exactly(d), &column(&|t| per[t].0[d * (k + 2) + r])));
        }
    }
    let proportion_draws: Vec<Vec<f64>> = (0..k + 2).map(|r| column(&|t| per[t].2[r])).collect();
    let proportions = proportion_draws
        .iter()
        .enumerate()
        .map(|(r, v)| DrawSummary::from_draws(&format!("stratum[{r}]"), v))
        .collect();
    let reduction_draws = column(&|t| (1..=k).map(|r| per[t].1[r - 1] * per[t].2[r]).sum());
    Ok(PosteriorApce {
        outcome: draws.outcome.clone(),
        rho: draws.rho,
        estimates,
        proportions,
        apce_p_draws,
        apce_s_draws,
        proportion_draws,
        reduction_draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityEntry {
    pub rho: f64,
    pub apce: PosteriorApce,
    pub max_rhat: f64,
    pub warnings: Vec<String>,
}

/// One independent sampler run per ρ, all with the seed in `base`.
pub fn sensitivity_grid(
    ds: &Dataset,
    outcome: &str,
    design: &Design,
    rho_list: &[f64],
    base: &GibbsConfig,
    max_draws: usize,
) -> Result<Vec<SensitivityEntry>> {
    rho_list
        .iter()
        .map(|&rho| {
            let cfg = GibbsConfig { rho, ..base.clone() };
            let draws = gibbs_run(ds, outcome, design, &cfg)?;
            let apce = posterior_apce(&draws, design, None, max_draws)?;
            let max_rhat = draws.rhat().iter().map(|(_, r)| *r).fold(f64::NAN, f64::max);
            Ok(SensitivityEntry {
                rho,
                apce,
                max_rhat,
                warnings: draws.warnings.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view_from<'a>(v: &'a [f64], p: usize, k: usize) -> DrawView<'a> {
        DrawView::split(v, p, k)
    }

    #[test]
    fn partition_sums_to_one_and_is_nonnegative() {
        let v = vec![0.3, 0.5, -0.2, 0.1, 0.4, 0.8, -0.6, -0.5, 0.7, -0.4, 0.9, -1.0, 0.0, 0.0, 1.2];
        // p = 2, k = 2 → dim 3p+1+3k+1 = 14; trailing value is unused padding
        let view = view_from(&v[..14], 2, 2);
        let mut out = vec![0.0; 12];
        for &rho in &[0.0, 0.3, -0.7, 0.95] {
            for x in [[0.0, 1.0], [1.5, -2.0], [-3.0, 0.2]] {
                for z in 0..2 {
                    case_joint(&view, &x, z, rho, &mut out);
                    assert!(out.iter().all(|&p| p >= -1e-12));
                    assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn tied_cutpoints_give_empty_stratum() {
        let v = vec![0.0, 0.5, 0.0, 0.3, -0.2, 0.6, -0.1, 0.7, 0.2, 0.2, 1.0];
        // p = 1, k = 2: δ = (0.2, 0.2, 1.0) ⇒ stratum 1 has zero mass.
        let view = view_from(&v, 1, 2);
        let mut out = vec![0.0; 12];
        case_joint(&view, &[0.4], 1, 0.4, &mut out);
        for d in 0..3 {
            assert!(out[d * 4 + 1].abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rho_path_is_continuous() {
        let v = vec![0.3, 0.5, -0.2, 0.1, 0.4, 0.8, -0.6, -0.5, 0.7, -0.4, 0.9, -1.0, 0.0, 0.0];
        let view = view_from(&v, 2, 2);
        let mut a = vec![0.0; 12];
        let mut b = vec![0.0; 12];
        for x in [[0.0, 1.0], [1.5, -2.0]] {
            case_joint(&view, &x, 1, 0.0, &mut a);
            case_joint(&view, &x, 1, 1e-12, &mut b);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-6);
            }
        }
    }
}
