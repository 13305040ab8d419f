//! Principal fairness: how far the decision distribution within a risk
//! stratum differs across protected groups.
//!
//! For stratum r, arm z and group a,
//! `P_a(d) = Pr(D(z) ≥ d | A = a, R = r)`, averaged over the empirical
//! covariate distribution of group a. The gap is
//! `Δ_r(z) = max_{d ≥ 1} (max_a P_a(d) − min_a P_a(d))`.

use crate::bayes::{case_joint, check_dims, DrawSummary, DrawView, PosteriorDraws};
use crate::data::Design;
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

/// Where the maximal gap sits: high group, low group, decision threshold.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct GapLocation {
    pub a: String,
    pub a_prime: String,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessDelta {
    pub outcome: String,
    pub stratum: usize,
    pub z: u8,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Most frequent location of the maximum over draws.
    pub argmax: GapLocation,
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessDiff {
    pub outcome: String,
    pub stratum: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Δ_r(1) − Δ_r(0) per draw.
    pub draws: Vec<f64>,
}

/// Sorted group labels and, per group, its case indices.
struct Groups {
    labels: Vec<String>,
    members: Vec<Vec<usize>>,
}

fn groups(attributes: &[String], cases: &[usize]) -> Result<Groups> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in cases {
        map.entry(attributes[i].as_str()).or_default().push(i);
    }
    if map.len() < 2 {
        return Err(Error::EmptyGroup(format!(
            "need at least 2 non-empty attribute groups, found {}",
            map.len()
        )));
    }
    let (labels, members) = map.into_iter().map(|(l, m)| (l.to_string(), m)).unzip();
    Ok(Groups { labels, members })
}

/// Per-group Pr(D(z) ≥ d | A, R = r) for d = 1..=k, both arms:
/// `out[z][g][d - 1]`.
fn group_curves(view: &DrawView, design: &Design, groups: &Groups, r: usize, rho: f64) -> [Vec<Vec<f64>>; 2] {
    let k = view.delta.len() - 1;
    let w = k + 2;
    let mut buf = vec![0.0; (k + 1) * w];
    let mut out = [Vec::new(), Vec::new()];
    for members in &groups.members {
        let mut num = [vec![0.0; k], vec![0.0; k]];
        let mut den = 0.0;
        for &i in members {
            let x = design.row(i);
            for z in 0..2u8 {
                case_joint(view, x, z, rho, &mut buf);
                let mut tail = 0.0;
                for d in (1..=k).rev() {
                    tail += buf[d * w + r];
                    num[z as usize][d - 1] += tail;
                }
                if z == 0 {
                    den += (0..=k).map(|d| buf[d * w + r]).sum::<f64>();
                }
            }
        }
        for z in 0..2 {
            out[z].push(num[z].iter().map(|v| v / den).collect());
        }
    }
    out
}

/// Maximal spread over groups and thresholds for one arm's curves.
fn max_gap(curves: &[Vec<f64>]) -> (f64, usize, usize, usize) {
    let k = curves[0].len();
    let mut best = (f64::NEG_INFINITY, 0, 0, 1);
    for d in 0..k {
        let (mut hi, mut lo) = (0, 0);
        for g in 1..curves.len() {
            if curves[g][d] > curves[hi][d] {
                hi = g;
            }
            if curves[g][d] < curves[lo][d] {
                lo = g;
            }
        }
        let gap = curves[hi][d] - curves[lo][d];
        if gap > best.0 {
            best = (gap, hi, lo, d + 1);
        }
    }
    if best.0.is_finite() {
        best
    } else {
        (f64::NAN, 0, 0, 1)
    }
}

struct DrawGaps {
    gap: [f64; 2],
    at: [(usize, usize, usize); 2],
}

fn per_draw(
    draws: &PosteriorDraws,
    design: &Design,
    attributes: &[String],
    r: usize,
    max_draws: usize,
) -> Result<(Groups, Vec<DrawGaps>)> {
    if attributes.len() != design.nrows() {
        return Err(Error::LengthMismatch {
            expected: design.nrows(),
            got: attributes.len(),
        });
    }
    if r > draws.k + 1 {
        return Err(Error::InvalidArgument(format!("stratum {r} exceeds k + 1 = {}", draws.k + 1)));
    }
    let cases = check_dims(draws, design, None)?;
    let groups = groups(attributes, &cases)?;
    let gaps = draws
        .thinned(max_draws)
        .par_iter()
        .map(|view| {
            let curves = group_curves(view, design, &groups, r, draws.rho);
            let g0 = max_gap(&curves[0]);
            let g1 = max_gap(&curves[1]);
            DrawGaps {
                gap: [g0.0, g1.0],
                at: [(g0.1, g0.2, g0.3), (g1.1, g1.2, g1.3)],
            }
        })
        .collect();
    Ok((groups, gaps))
}

/// Δ_r(z) over at most `max_draws` posterior draws (0 = all).
pub fn fairness_delta(
    draws: &PosteriorDraws,
    design: &Design,
    attributes: &[String],
    r: usize,
    z: u8,
    max_draws: usize,
) -> Result<FairnessDelta> {
    let (groups, gaps) = per_draw(draws, design, attributes, r, max_draws)?;
    let zi = (z != 0) as usize;
    let values: Vec<f64> = gaps.iter().map(|g| g.gap[zi]).collect();
    let s = DrawSummary::from_draws("", &values);
    let mut counts: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for g in &gaps {
        *counts.entry(g.at[zi]).or_default() += 1;
    }
    // Ties between equally frequent locations go to the smallest key.
    let (hi, lo, d) = counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(key, _)| key)
        .unwrap_or((0, 0, 1));
    Ok(FairnessDelta {
        outcome: draws.outcome.clone(),
        stratum: r,
        z: zi as u8,
        delta: s.mean,
        ci_low: s.lo,
        ci_high: s.hi,
        argmax: GapLocation {
            a: groups.labels[hi].clone(),
            a_prime: groups.labels[lo].clone(),
            d,
        },
        draws: values,
    })
}

/// Δ_r(1) − Δ_r(0), both computed from the same draw.
pub fn fairness_delta_diff(
    draws: &PosteriorDraws,
    design: &Design,
    attributes: &[String],
    r: usize,
    max_draws: usize,
) -> Result<FairnessDiff> {
    let (_, gaps) = per_draw(draws, design, attributes, r, max_draws)?;
    let values: Vec<f64> = gaps.iter().map(|g| g.gap[1] - g.gap[0]).collect();
    let s = DrawSummary::from_draws("", &values);
    Ok(FairnessDiff {
        outcome: draws.outcome.clone(),
        stratum: r,
        mean: s.mean,
        ci_low: s.lo,
        ci_high: s.hi,
        draws: values,
    })
}

pub fn fairness_csv(rows: &[FairnessDelta]) -> String {
    let mut s = String::from("outcome,stratum,z,delta_mean,lo,hi,argmax_a,argmax_a_prime,argmax_d\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.outcome, r.stratum, r.z, r.delta, r.ci_low, r.ci_high, r.argmax.a, r.argmax.a_prime, r.argmax.d
        );
    }
    s
}
