//! Frequentist principal-stratum estimation: principal scores from the
//! outcome probit, Hajek-weighted effects, and the arm-stratified bootstrap.

use crate::data::{Dataset, Design};
use crate::error::{Error, Result};
use crate::models::ProbitFit;
use crate::numeric::norm_cdf;
use crate::numeric::stats::quantile_sorted;
use crate::rng::substream;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

const NEGATIVE_SCORE_FLAG: f64 = -0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Mle,
    PosteriorDraw,
}

/// Per-case stratum probabilities e_0..e_{k+1}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrincipalScoreTable {
    pub outcome: String,
    pub source: ScoreSource,
    /// Clipped and renormalized rows.
    pub scores: Vec<Vec<f64>>,
    /// Number of raw entries below zero.
    pub negative_raw: usize,
    /// Most negative raw entry (0 if none).
    pub min_raw: f64,
    /// Share of cases with some raw entry below −0.05.
    pub flagged_fraction: f64,
}

impl PrincipalScoreTable {
    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// Number of strata, k + 2.
    pub fn strata(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Mean score per stratum (estimated stratum proportions).
    pub fn proportions(&self) -> Vec<f64> {
        let m = self.strata();
        let mut acc = vec![0.0; m];
        for row in &self.scores {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / self.n() as f64).collect()
    }

    /// Table from already-valid rows (no clipping diagnostics).
    pub fn from_rows(outcome: &str, source: ScoreSource, scores: Vec<Vec<f64>>) -> Self {
        clip_rows(outcome, source, scores)
    }

    /// Collapse to a binary decision at `threshold`: strata below the
    /// threshold become 0, strata in `threshold..=k` become 1, and k+1 becomes 2.
    pub fn collapsed(&self, threshold: usize) -> Self {
        let k = self.strata() - 2;
        let scores = self
            .scores
            .iter()
            .map(|row| {
                let s: f64 = row[..threshold].iter().sum();
                let p: f64 = row[threshold..=k].iter().sum();
                vec![s, p, row[k + 1]]
            })
            .collect();
        Self {
            scores,
            ..self.clone()
        }
    }
}

/// Raw (unclipped) scores for one linear predictor η = xᵀα.
pub fn raw_scores(delta: &[f64], eta: f64) -> Vec<f64> {
    let k = delta.len() - 1;
    let mut row = Vec::with_capacity(k + 2);
    row.push(norm_cdf(delta[0] - eta));
    for r in 1..=k {
        row.push(norm_cdf(-delta[r - 1] + eta) - norm_cdf(-delta[r] + eta));
    }
    row.push(norm_cdf(-delta[k] + eta));
    row
}

fn clip_rows(outcome: &str, source: ScoreSource, raw: Vec<Vec<f64>>) -> PrincipalScoreTable {
    let mut negative_raw = 0;
    let mut min_raw = 0.0f64;
    let mut flagged = 0usize;
    let n = raw.len();
    let scores = raw
        .into_iter()
        .map(|mut row| {
            let mut flag = false;
            for v in row.iter_mut() {
                if *v < 0.0 {
                    negative_raw += 1;
                    min_raw = min_raw.min(*v);
                    flag |= *v < NEGATIVE_SCORE_FLAG;
                    *v = 0.0;
                }
            }
            flagged += flag as usize;
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
            row
        })
        .collect();
    PrincipalScoreTable {
        outcome: outcome.to_string(),
        source,
        scores,
        negative_raw,
        min_raw,
        flagged_fraction: if n == 0 { 0.0 } else { flagged as f64 / n as f64 },
    }
}

pub fn principal_scores(fit: &ProbitFit, design: &Design) -> Result<PrincipalScoreTable> {
    if design.ncols() != fit.alpha.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns, fit has {}",
            design.ncols(),
            fit.alpha.len()
        )));
    }
    let raw = (0..design.nrows())
        .map(|i| raw_scores(&fit.delta, fit.linear(design.row(i))))
        .collect();
    Ok(clip_rows(&fit.outcome, ScoreSource::Mle, raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecisionTarget {
    /// 1(D ≥ t).
    AtLeast(usize),
    /// 1(D = d).
    Exactly(usize),
}

impl DecisionTarget {
    #[inline]
    pub fn hit(self, d: usize) -> bool {
        match self {
            DecisionTarget::AtLeast(t) => d >= t,
            DecisionTarget::Exactly(v) => d == v,
        }
    }

    pub fn label(self) -> String {
        match self {
            DecisionTarget::AtLeast(t) => format!(">={t}"),
            DecisionTarget::Exactly(v) => format!("={v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApceEstimate {
    pub outcome: String,
    pub stratum: usize,
    pub decision: String,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: &'static str,
}

/// Weighted arm difference Σ w 1(target) / Σ w, treated minus control.
pub fn hajek_difference(z: &[u8], d: &[usize], w: &[f64], target: DecisionTarget, stratum: usize) -> Result<f64> {
    let mut num = [0.0f64; 2];
    let mut den = [0.0f64; 2];
    for i in 0..z.len() {
        let a = z[i] as usize;
        den[a] += w[i];
        if target.hit(d[i]) {
            num[a] += w[i];
        }
    }
    for a in 0..2 {
        if den[a].abs() < 1e-10 {
            return Err(Error::DegenerateStratum { stratum, z: a as u8 });
        }
    }
    Ok(num[1] / den[1] - num[0] / den[0])
}

/// Hajek estimate of the decision effect within stratum `r` (point only).
pub fn hajek_apce(ds: &Dataset, scores: &PrincipalScoreTable, r: usize, target: DecisionTarget) -> Result<ApceEstimate> {
    if scores.n() != ds.len() {
        return Err(Error::LengthMismatch {
            expected: ds.len(),
            got: scores.n(),
        });
    }
    if r >= scores.strata() {
        return Err(Error::InvalidArgument(format!("stratum {r} outside 0..{}", scores.strata())));
    }
    let w: Vec<f64> = scores.scores.iter().map(|row| row[r]).collect();
    let point = hajek_difference(&ds.z(), &ds.d(), &w, target, r)?;
    Ok(ApceEstimate {
        outcome: scores.outcome.clone(),
        stratum: r,
        decision: target.label(),
        point,
        ci_low: point,
        ci_high: point,
        method: "hajek",
    })
}

/// Arm-stratified bootstrap: each replicate resamples `n_z` cases with
/// replacement within each arm and passes the chosen indices to `stat`.
/// Replicates run in parallel on independent substreams and are returned in
/// replicate order; failed replicates are dropped unless more than 10% fail.
pub fn bootstrap_replicates<F>(ds: &Dataset, b: usize, seed: u64, label: &str, stat: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&Dataset, &[usize]) -> Result<Vec<f64>> + Sync,
{
    if b < 100 {
        return Err(Error::InvalidArgument(format!("bootstrap needs B >= 100, got {b}")));
    }
    let arms: [Vec<usize>; 2] = [0u8, 1].map(|z| {
        ds.records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.z == z)
            .map(|(i, _)| i)
            .collect()
    });
    let results: Vec<Result<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, label, rep as u64);
            let mut idx = Vec::with_capacity(ds.len());
            for arm in &arms {
                for _ in 0..arm.len() {
                    idx.push(arm[rng.random_range(0..arm.len())]);
                }
            }
            stat(ds, &idx)
        })
        .collect();
    let mut ok = Vec::with_capacity(b);
    let mut failed = 0;
    let mut last = String::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                last = e.to_string();
            }
        }
    }
    if failed * 10 > b {
        return Err(Error::ReplicateFailureRate { failed, total: b, last });
    }
    Ok(ok)
}

/// Percentile 95% interval of a scalar statistic.
pub fn bootstrap_ci<F>(ds: &Dataset, stat: F, b: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&Dataset, &[usize]) -> Result<f64> + Sync,
{
    let reps = bootstrap_replicates(ds, b, seed, "bootstrap.replicate", |d, idx| Ok(vec![stat(d, idx)?]))?;
    let mut v: Vec<f64> = reps.into_iter().map(|r| r[0]).collect();
    v.sort_by(|a, c| a.total_cmp(c));
    Ok((quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975)))
}

/// Percentile intervals for each component of a vector statistic.
pub fn percentile_intervals(reps: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let m = reps.first().map_or(0, Vec::len);
    (0..m)
        .map(|j| {
            let mut v: Vec<f64> = reps.iter().map(|r| r[j]).collect();
            v.sort_by(|a, c| a.total_cmp(c));
            (quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975))
        })
        .collect()
}

/// Binary-decision weighting estimates of the preventable, risky and safe
/// effects on the detention probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryIpw {
    pub apce_p: f64,
    pub apce_r: f64,
    pub apce_s: f64,
    /// Share of cases with raw e_P(x) < 0 (testable-condition violation).
    pub negative_ep_fraction: f64,
    pub violation: bool,
}

/// `fit` must be an outcome probit on the binary decision (k = 1). The
/// scores are e_R = Pr(Y=1|D=1,x), e_S = Pr(Y=0|D=0,x), e_P = 1 − e_R − e_S.
/// Negative e_P is flagged but used as is, so the estimate is still returned.
pub fn apce_binary_ipw(ds: &Dataset, fit: &ProbitFit, design: &Design) -> Result<BinaryIpw> {
    if ds.k() != 1 || fit.k() != 1 {
        return Err(Error::InvalidArgument("binary weighting needs a binary decision (k = 1)".into()));
    }
    let n = ds.len();
    let mut ep = Vec::with_capacity(n);
    let mut er = Vec::with_capacity(n);
    let mut es = Vec::with_capacity(n);
    let mut negative = 0usize;
    for i in 0..n {
        let eta = fit.linear(design.row(i));
        let r = norm_cdf(-fit.delta[1] + eta);
        let s = 1.0 - norm_cdf(-fit.delta[0] + eta);
        let p = 1.0 - r - s;
        if p < 0.0 {
            negative += 1;
        }
        ep.push(p);
        er.push(r);
        es.push(s);
    }
    let z = ds.z();
    let d = ds.d();
    let t = DecisionTarget::AtLeast(1);
    Ok(BinaryIpw {
        apce_p: hajek_difference(&z, &d, &ep, t, 1)?,
        apce_r: hajek_difference(&z, &d, &er, t, 2)?,
        apce_s: hajek_difference(&z, &d, &es, t, 0)?,
        negative_ep_fraction: negative as f64 / n as f64,
        violation: negative > 0,
    })
}

/// Every effect the scores identify: APCEp(r) for r = 1..=k (decision at
/// least r) and APCE(d, r) for all cells (decision exactly d). Intervals come
/// from `b` arm-stratified bootstrap replicates that refit the outcome
/// probit; `b = 0` gives point estimates only. The probit is always fitted
/// on every case; `keep` selects the cases the weighted means run over. Intervals are widened to
/// contain the point estimate when needed.
pub fn hajek_table(
    ds: &Dataset,
    outcome: &str,
    design: &Design,
    keep: Option<&[bool]>,
    b: usize,
    seed: u64,
) -> Result<Vec<ApceEstimate>> {
    if let Some(m) = keep {
        if m.len() != ds.len() {
            return Err(Error::LengthMismatch { expected: ds.len(), got: m.len() });
        }
        if !m.iter().any(|&v| v) {
            return Err(Error::EmptySubset);
        }
    }
    let k = ds.k();
    let mut cells = Vec::new();
    for r in 1..=k {
        cells.push((r, DecisionTarget::AtLeast(r)));
    }
    for d in 0..=k {
        for r in 0..k + 2 {
            cells.push((r, DecisionTarget::Exactly(d)));
        }
    }
    let eval = |sub: &Dataset, x: &Design, mask: Option<Vec<bool>>| -> Result<Vec<f64>> {
        let fit = crate::models::fit_outcome_probit(sub, outcome, x)?;
        let mut sc = principal_scores(&fit, x)?;
        let sub = match mask {
            Some(m) => {
                let idx: Vec<usize> = (0..m.len()).filter(|&i| m[i]).collect();
                sc.scores = idx.iter().map(|&i| sc.scores[i].clone()).collect();
                sub.subset(&idx)
            }
            None => sub.clone(),
        };
        cells.iter().map(|&(r, t)| hajek_apce(&sub, &sc, r, t).map(|e| e.point)).collect()
    };
    let point = eval(ds, design, keep.map(<[bool]>::to_vec))?;
    let ci = if b > 0 {
        let reps = bootstrap_replicates(ds, b, seed, "hajek.bootstrap", |d, idx| {
            let mask = keep.map(|m| idx.iter().map(|&i| m[i]).collect());
            eval(&d.subset(idx), &design.select_rows(idx), mask)
        })?;
        percentile_intervals(&reps)
    } else {
        point.iter().map(|&p| (p, p)).collect()
    };
    Ok(cells
        .iter()
        .zip(point.iter().zip(ci))
        .map(|(&(r, t), (&p, (lo, hi)))| ApceEstimate {
            outcome: outcome.to_string(),
            stratum: r,
            decision: t.label(),
            point: p,
            ci_low: lo.min(p),
            ci_high: hi.max(p),
            method: "hajek",
        })
        .collect())
}

/// Tidy CSV text: outcome, stratum, decision, point, lo, hi, method.
pub fn estimates_csv(rows: &[ApceEstimate]) -> String {
    let mut s = String::from("outcome,stratum,decision,point,lo,hi,method\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.outcome, r.stratum, r.decision, r.point, r.ci_low, r.ci_high, r.method
        ));
    }
    s
}
