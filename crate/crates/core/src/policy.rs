//! Cost-weighted decision rules and provision rules.
//!
//! With stratum probabilities e_0..e_{k+1} for a case, the expected utility
//! of decision d is
//! `g_d = Σ_{r≤d} e_r − c0·Σ_{r>d} e_r − c1·Σ_{r<d} e_r`,
//! i.e. the score-weighted average of
//! `u(d, r) = 1{d=r} + (1 − c1)·1{d>r} − c0·1{d<r}`.

use crate::bayes::{DecisionModel, DrawSummary, PosteriorDraws};
use crate::data::{Dataset, Design};
use crate::error::{Error, Result};
use crate::numeric::norm_cdf;
use crate::weights::{PrincipalScoreTable, ScoreSource};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Prefer the smaller (more lenient) decision.
    #[default]
    Lenient,
    Stringent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    /// Cost of a negative outcome.
    pub c0: f64,
    /// Cost of an unnecessarily harsh decision.
    pub c1: f64,
    #[serde(default)]
    pub tie: TieBreak,
}

impl UtilitySpec {
    pub fn new(c0: f64, c1: f64) -> Result<Self> {
        let spec = Self {
            c0,
            c1,
            tie: TieBreak::Lenient,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c0", self.c0), ("c1", self.c1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// u(d, r).
    pub fn utility(&self, d: usize, r: usize) -> f64 {
        if d == r {
            1.0
        } else if d > r {
            1.0 - self.c1
        } else {
            -self.c0
        }
    }
}

/// g_0..g_k for one score row (length k + 2).
pub fn g_values(e: &[f64], spec: &UtilitySpec) -> Vec<f64> {
    let k = e.len() - 2;
    (0..=k)
        .map(|d| {
            let at_most: f64 = e[..=d].iter().sum();
            let above: f64 = e[d + 1..].iter().sum();
            let below: f64 = e[..d].iter().sum();
            at_most - spec.c0 * above - spec.c1 * below
        })
        .collect()
}

fn argmax(g: &[f64], tie: TieBreak) -> usize {
    let mut best = 0;
    for d in 1..g.len() {
        let better = match tie {
            TieBreak::Lenient => g[d] > g[best],
            TieBreak::Stringent => g[d] >= g[best],
        };
        if better {
            best = d;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalRule {
    pub decisions: Vec<usize>,
    /// Per case, g_0..g_k.
    pub g: Vec<Vec<f64>>,
}

pub fn optimal_rule(scores: &PrincipalScoreTable, spec: &UtilitySpec) -> OptimalRule {
    let g: Vec<Vec<f64>> = scores.scores.iter().map(|e| g_values(e, spec)).collect();
    let decisions = g.iter().map(|row| argmax(row, spec.tie)).collect();
    OptimalRule { decisions, g }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub c0: f64,
    pub c1: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilitySurface {
    pub outcome: String,
    pub subset: String,
    pub source: String,
    pub points: Vec<SurfacePoint>,
}

impl UtilitySurface {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("subset,c0,c1,value\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", self.subset, p.c0, p.c1, p.value);
        }
        s
    }
}

fn check_grid(c0_grid: &[f64], c1_grid: &[f64]) -> Result<()> {
    if c0_grid.is_empty() || c1_grid.is_empty() {
        return Err(Error::InvalidArgument("cost grid is empty".into()));
    }
    for &c in c0_grid.iter().chain(c1_grid) {
        UtilitySpec::new(c, 0.0)?;
    }
    Ok(())
}

fn selected(n: usize, keep: Option<&[bool]>) -> Result<Vec<usize>> {
    if let Some(m) = keep {
        if m.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: m.len(),
            });
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&i| keep.is_none_or(|m| m[i])).collect();
    if idx.is_empty() {
        return Err(Error::EmptySubset);
    }
    Ok(idx)
}

/// Share of the selected cases whose optimal decision is at least 1, for
/// every (c0, c1) pair (c1 varies fastest).
pub fn optimal_share_grid(
    scores: &PrincipalScoreTable,
    c0_grid: &[f64],
    c1_grid: &[f64],
    keep: Option<&[bool]>,
    subset: &str,
) -> Result<UtilitySurface> {
    check_grid(c0_grid, c1_grid)?;
    let cases = selected(scores.n(), keep)?;
    let pairs: Vec<(f64, f64)> = c0_grid.iter().flat_map(|&a| c1_grid.iter().map(move |&b| (a, b))).collect();
    let points = pairs
        .par_iter()
        .map(|&(c0, c1)| {
            let spec = UtilitySpec {
                c0,
                c1,
                tie: TieBreak::Lenient,
            };
            let harsh = cases
                .iter()
                .filter(|&&i| argmax(&g_values(&scores.scores[i], &spec), spec.tie) >= 1)
                .count();
            SurfacePoint {
                c0,
                c1,
                value: harsh as f64 / cases.len() as f64,
            }
        })
        .collect();
    Ok(UtilitySurface {
        outcome: scores.outcome.clone(),
        subset: subset.to_string(),
        source: "optimal_share".into(),
        points,
    })
}

/// Mean over cases of Σ_r e_r(x_i)·u(d_i, r).
pub fn expected_utility(scores: &PrincipalScoreTable, decisions: &[usize], spec: &UtilitySpec) -> Result<f64> {
    if decisions.len() != scores.n() {
        return Err(Error::LengthMismatch {
            expected: scores.n(),
            got: decisions.len(),
        });
    }
    if decisions.is_empty() {
        return Err(Error::EmptySubset);
    }
    let k = scores.strata() - 2;
    if let Some(&d) = decisions.iter().find(|&&d| d > k) {
        return Err(Error::InvalidArgument(format!("decision {d} exceeds k = {k}")));
    }
    let total: f64 = scores
        .scores
        .iter()
        .zip(decisions)
        .map(|(e, &d)| e.iter().enumerate().map(|(r, p)| p * spec.utility(d, r)).sum::<f64>())
        .sum();
    Ok(total / decisions.len() as f64)
}

/// Utility of the observed (binary-collapsed) decisions in arm `z` minus
/// that of the dichotomized DMF recommendation on the same cases. Scores
/// must already be on the binary scale (3 strata).
pub fn utility_difference(ds: &Dataset, scores: &PrincipalScoreTable, z: u8, spec: &UtilitySpec) -> Result<f64> {
    if scores.n() != ds.len() {
        return Err(Error::LengthMismatch {
            expected: ds.len(),
            got: scores.n(),
        });
    }
    if scores.strata() != 3 {
        return Err(Error::InvalidArgument(format!(
            "utility comparison needs binary scores, got {} strata",
            scores.strata()
        )));
    }
    let mut rows = Vec::new();
    let mut judge = Vec::new();
    let mut dmf = Vec::new();
    for (i, c) in ds.records().iter().enumerate() {
        if c.z != z {
            continue;
        }
        let rec = c.dmf.ok_or_else(|| Error::InvalidDataset(format!("case `{}` has no DMF recommendation", c.case_id)))?;
        rows.push(scores.scores[i].clone());
        judge.push((c.d >= 1) as usize);
        dmf.push(rec.min(1) as usize);
    }
    if rows.is_empty() {
        return Err(Error::EmptyArm(z));
    }
    let sub = PrincipalScoreTable::from_rows(&scores.outcome, scores.source, rows);
    Ok(expected_utility(&sub, &judge, spec)? - expected_utility(&sub, &dmf, spec)?)
}

/// Score table implied by one posterior draw: e_r(x) from (α, δ).
pub fn draw_scores(draws: &PosteriorDraws, design: &Design, chain: usize, t: usize) -> PrincipalScoreTable {
    let view = draws.view(chain, t);
    let rows = (0..design.nrows())
        .map(|i| {
            let eta = view.risk_index(design.row(i));
            let k = view.delta.len() - 1;
            let cdf = |l: usize| match l {
                0 => 0.0,
                l if l == k + 2 => 1.0,
                l => norm_cdf(view.delta[l - 1] - eta),
            };
            (0..k + 2).map(|r| cdf(r + 1) - cdf(r)).collect()
        })
        .collect();
    PrincipalScoreTable::from_rows(&draws.outcome, ScoreSource::PosteriorDraw, rows)
}

/// Evaluate `stat` on the score table of each of at most `max_draws` draws
/// (0 = all) and summarize.
pub fn over_draws<F>(draws: &PosteriorDraws, design: &Design, max_draws: usize, name: &str, stat: F) -> Result<(DrawSummary, Vec<f64>)>
where
    F: Fn(&PrincipalScoreTable) -> Result<f64> + Sync,
{
    let per = draws.per_chain();
    let total = draws.total();
    let take = if max_draws == 0 || max_draws >= total { total } else { max_draws };
    let values = (0..take)
        .into_par_iter()
        .map(|i| {
            let g = if take == total { i } else { i * total / take };
            stat(&draw_scores(draws, design, g / per, g % per))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((DrawSummary::from_draws(name, &values), values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvisionRule {
    /// h_z(x) per case, z = 0, 1.
    pub h: [Vec<f64>; 2],
    /// 1 where provision is preferred (strictly larger h_1).
    pub xi: Vec<u8>,
    pub share: f64,
}

/// h_z(x) = Σ_r e_r(x)·Pr(D = r | Z = z, x): probability that the decision
/// exactly matches the case's stratum.
pub fn optimal_provision<M: DecisionModel>(scores: &PrincipalScoreTable, decision: &M, design: &Design) -> Result<ProvisionRule> {
    if design.nrows() != scores.n() {
        return Err(Error::LengthMismatch {
            expected: scores.n(),
            got: design.nrows(),
        });
    }
    let k = scores.strata() - 2;
    let h: Vec<[f64; 2]> = (0..scores.n())
        .map(|i| {
            let x = design.row(i);
            let e = &scores.scores[i];
            let hz = |z: u8| (0..=k).map(|r| e[r] * decision.prob_d(z, r, x)).sum::<f64>();
            [hz(0), hz(1)]
        })
        .collect();
    let xi: Vec<u8> = h.iter().map(|v| (v[1] > v[0]) as u8).collect();
    let share = xi.iter().map(|&v| v as f64).sum::<f64>() / xi.len().max(1) as f64;
    Ok(ProvisionRule {
        h: [h.iter().map(|v| v[0]).collect(), h.iter().map(|v| v[1]).collect()],
        xi,
        share,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::DecisionFn;
    use proptest::prelude::*;

    fn table(rows: Vec<Vec<f64>>) -> PrincipalScoreTable {
        PrincipalScoreTable::from_rows("y", ScoreSource::Mle, rows)
    }

    fn spec(c0: f64, c1: f64) -> UtilitySpec {
        UtilitySpec::new(c0, c1).unwrap()
    }

    #[test]
    fn safe_case_prefers_leniency() {
        let g = g_values(&[1.0, 0.0, 0.0], &spec(2.0, 1.0));
        assert_eq!(g, vec![1.0, 0.0]);
        assert_eq!(optimal_rule(&table(vec![vec![1.0, 0.0, 0.0]]), &spec(2.0, 1.0)).decisions, vec![0]);
    }

    #[test]
    fn tie_rule_is_configurable() {
        // c0 = c1 = 0 with e_k = 0: g_{k−1} = g_k.
        let t = table(vec![vec![0.5, 0.5, 0.0, 0.0]]);
        let mut s = spec(0.0, 0.0);
        assert_eq!(optimal_rule(&t, &s).decisions, vec![1]);
        s.tie = TieBreak::Stringent;
        assert_eq!(optimal_rule(&t, &s).decisions, vec![2]);
    }

    #[test]
    fn hand_computed_expected_utility() {
        // k = 1; u(0,·) = (1, −c0, −c0), u(1,·) = (1−c1, 1, −c0).
        let t = table(vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3], vec![0.7, 0.2, 0.1]]);
        let (c0, c1) = (1.5, 0.25);
        let d = [0, 1, 1];
        let want = ((0.5 - 1.5 * 0.3 - 1.5 * 0.2) + (0.1 * 0.75 + 0.6 - 1.5 * 0.3) + (0.7 * 0.75 + 0.2 - 1.5 * 0.1)) / 3.0;
        let got = expected_utility(&t, &d, &spec(c0, c1)).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!(matches!(expected_utility(&t, &d[..2], &spec(c0, c1)), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn zero_costs_reward_every_non_lenient_mistake_equally() {
        let t = table(vec![vec![0.2, 0.3, 0.4, 0.1], vec![0.6, 0.1, 0.1, 0.2]]);
        let u = expected_utility(&t, &[1, 2], &spec(0.0, 0.0)).unwrap();
        assert!((u - (0.5 + 0.8) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_scores_matching_strata_have_unit_utility() {
        let rows = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]];
        let u = expected_utility(&table(rows), &[0, 2, 1], &spec(3.0, 0.4)).unwrap();
        assert_eq!(u, 1.0);
    }

    #[test]
    fn share_grid_extremes() {
        let t = table(vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1]]);
        let s = optimal_share_grid(&t, &[0.0], &[0.0], None, "all").unwrap();
        assert_eq!(s.points[0].value, 1.0);
        let safe = table(vec![vec![1.0, 0.0, 0.0]; 3]);
        let s = optimal_share_grid(&safe, &[0.0], &[0.5, 2.0], None, "all").unwrap();
        assert!(s.points.iter().all(|p| p.value == 0.0));
        assert!(matches!(
            optimal_share_grid(&t, &[0.0], &[0.0], Some(&[false, false]), "none"),
            Err(Error::EmptySubset)
        ));
        assert!(s.to_csv().starts_with("subset,c0,c1,value\nall,0,0.5,0\n"));
    }

    #[test]
    fn identical_arms_never_provide() {
        let t = table(vec![vec![0.3, 0.3, 0.4], vec![0.5, 0.4, 0.1]]);
        let design = Design::from_rows(vec!["x".into()], &[vec![0.1], vec![-0.4]]).unwrap();
        let model = DecisionFn(|_z: u8, d: usize, x: &[f64]| if d == 0 { norm_cdf(x[0]) } else { 1.0 - norm_cdf(x[0]) });
        let rule = optimal_provision(&t, &model, &design).unwrap();
        assert!(rule.xi.iter().all(|&v| v == 0));
        assert!(rule.h.iter().flatten().all(|&h| (0.0..=1.0).contains(&h)));
    }

    fn score_row(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k + 2).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect()
        })
    }

    proptest! {
        #[test]
        fn g_increments_follow_closed_form(e in score_row(3), c0 in 0.0f64..5.0, c1 in 0.0f64..5.0) {
            let g = g_values(&e, &spec(c0, c1));
            for d in 1..g.len() {
                let inc = (1.0 + c0) * e[d] - c1 * e[d - 1];
                prop_assert!((g[d] - g[d - 1] - inc).abs() < 1e-12);
            }
        }

        #[test]
        fn g_is_the_expected_single_case_utility(e in score_row(2), c0 in 0.0f64..5.0, c1 in 0.0f64..5.0) {
            let s = spec(c0, c1);
            let g = g_values(&e, &s);
            for (d, gd) in g.iter().enumerate() {
                let direct: f64 = e.iter().enumerate().map(|(r, p)| p * s.utility(d, r)).sum();
                prop_assert!((gd - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn rule_is_scale_free(e in score_row(2), c0 in 0.0f64..5.0, c1 in 0.0f64..5.0, lam in 0.1f64..10.0) {
            // Utility rescaled by λ: argmax of λ·g equals argmax of g.
            let g = g_values(&e, &spec(c0, c1));
            let scaled: Vec<f64> = g.iter().map(|v| v * lam).collect();
            let gap = {
                let mut s = g.clone();
                s.sort_by(f64::total_cmp);
                s[s.len() - 1] - s[s.len() - 2]
            };
            prop_assume!(gap > 1e-9);
            prop_assert_eq!(argmax(&g, TieBreak::Lenient), argmax(&scaled, TieBreak::Lenient));
        }

        #[test]
        fn share_is_monotone_in_c0(rows in prop::collection::vec(score_row(2), 1..30), c1 in 0.0f64..3.0,
                                   mut c0s in prop::collection::vec(0.0f64..4.0, 2..8)) {
            c0s.sort_by(f64::total_cmp);
            let s = optimal_share_grid(&table(rows), &c0s, &[c1], None, "all").unwrap();
            for w in s.points.windows(2) {
                prop_assert!(w[1].value >= w[0].value);
            }
        }
    }
}
