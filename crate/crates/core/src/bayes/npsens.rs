//! Nonparametric sensitivity analysis: Pr{D(z)=d | R=r} under a given table
//! of outcome-ratio parameters ξ_{rdz}, held constant in x.
//!
//! ξ_{rdz} compares Pr{Y(r)=1 | D(z)=d, x} across d. Only ratios within a
//! (r, z) row enter the identification formulas, so rows are normalized to
//! ξ_{rrz} = 1 on construction.

use crate::data::encode::Design;
use crate::error::{Error, Result};
use crate::models::binary::ProbitFit;
use crate::models::ordinal::OrdinalFit;
use serde::Serialize;

/// Pr(Y = 1 | Z = z, D = d, X = x).
pub trait OutcomeModel: Sync {
    fn prob_y(&self, z: u8, d: usize, x: &[f64]) -> f64;
}

/// Pr(D = d | Z = z, X = x).
pub trait DecisionModel: Sync {
    fn prob_d(&self, z: u8, d: usize, x: &[f64]) -> f64;
}

impl OutcomeModel for ProbitFit {
    fn prob_y(&self, _z: u8, d: usize, x: &[f64]) -> f64 {
        self.predict(d, x)
    }
}

/// Separate ordinal fits for the control and treated arms.
impl DecisionModel for [OrdinalFit; 2] {
    fn prob_d(&self, z: u8, d: usize, x: &[f64]) -> f64 {
        self[z as usize].probs(x)[d]
    }
}

impl<F: Fn(u8, usize, &[f64]) -> f64 + Sync> OutcomeModel for F {
    fn prob_y(&self, z: u8, d: usize, x: &[f64]) -> f64 {
        self(z, d, x)
    }
}

/// Newtype so closures can serve as decision models too.
pub struct DecisionFn<F>(pub F);

impl<F: Fn(u8, usize, &[f64]) -> f64 + Sync> DecisionModel for DecisionFn<F> {
    fn prob_d(&self, z: u8, d: usize, x: &[f64]) -> f64 {
        (self.0)(z, d, x)
    }
}

/// ξ indexed `[z][r][d]`, r and d in 0..=k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiTable {
    k: usize,
    xi: [Vec<Vec<f64>>; 2],
}

impl XiTable {
    pub fn ones(k: usize) -> Self {
        let row = vec![vec![1.0; k + 1]; k + 1];
        Self {
            k,
            xi: [row.clone(), row],
        }
    }

    /// Build from a raw table; every entry must be positive and finite.
    pub fn new(k: usize, raw: [Vec<Vec<f64>>; 2]) -> Result<Self> {
        let mut xi = raw;
        for t in xi.iter_mut() {
            if t.len() != k + 1 || t.iter().any(|r| r.len() != k + 1) {
                return Err(Error::DimensionMismatch(format!("xi table must be {0}x{0} per arm", k + 1)));
            }
            for (r, row) in t.iter_mut().enumerate() {
                if row.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidArgument("xi entries must be positive".into()));
                }
                let base = row[r];
                row.iter_mut().for_each(|v| *v /= base);
            }
        }
        Ok(Self { k, xi })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, z: u8, r: usize, d: usize) -> f64 {
        self.xi[z as usize][r][d]
    }
}

/// Pr{D(z) = d | R = r} indexed `[z][r][d]`, r in 0..=k+1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumDecisionTable {
    pub k: usize,
    pub prob: [Vec<Vec<f64>>; 2],
}

impl StratumDecisionTable {
    /// Pr{D(1) ≥ r | R=r} − Pr{D(0) ≥ r | R=r}.
    pub fn apce_p(&self, r: usize) -> f64 {
        let at = |z: usize| self.prob[z][r][r..].iter().sum::<f64>();
        at(1) - at(0)
    }

    pub fn apce_s(&self) -> f64 {
        self.prob[1][0][0] - self.prob[0][0][0]
    }
}

fn averaged(design: &Design, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let n = design.nrows();
    (0..n).map(|i| f(design.row(i))).sum::<f64>() / n as f64
}

fn check_design(design: &Design) -> Result<()> {
    if design.nrows() == 0 {
        return Err(Error::EmptySubset);
    }
    Ok(())
}

/// Plug-in evaluation of the identification formulas with the given ξ,
/// averaging model predictions over the rows of `design`.
pub fn np_sensitivity(
    outcome: &dyn OutcomeModel,
    decision: &dyn DecisionModel,
    design: &Design,
    xi: &XiTable,
) -> Result<StratumDecisionTable> {
    check_design(design)?;
    let k = xi.k();
    let mut prob = [vec![vec![0.0; k + 1]; k + 2], vec![vec![0.0; k + 1]; k + 2]];
    for z in 0..2u8 {
        // q(r, d, x) = Pr{Y(r)=1 | D(z)=d, x};  m(r, x) = Pr{Y(r)=1 | x}.
        let q = |r: usize, d: usize, x: &[f64]| xi.get(z, r, d) * outcome.prob_y(z, r, x);
        let m = |r: usize, x: &[f64]| (0..=k).map(|d| q(r, d, x) * decision.prob_d(z, d, x)).sum::<f64>();
        for r in 0..k + 2 {
            let den = match r {
                0 => averaged(design, |x| 1.0 - m(0, x)),
                r if r == k + 1 => averaged(design, |x| m(k, x)),
                r => averaged(design, |x| m(r - 1, x) - m(r, x)),
            };
            if !(den > 0.0) {
                return Err(Error::NegativeStratumMass { stratum: r, mass: den });
            }
            for d in 0..=k {
                let num = match r {
                    0 => averaged(design, |x| (1.0 - q(0, d, x)) * decision.prob_d(z, d, x)),
                    r if r == k + 1 => averaged(design, |x| q(k, d, x) * decision.prob_d(z, d, x)),
                    r => averaged(design, |x| (q(r - 1, d, x) - q(r, d, x)) * decision.prob_d(z, d, x)),
                };
                prob[z as usize][r][d] = num / den;
            }
        }
    }
    Ok(StratumDecisionTable { k, prob })
}

/// The same quantities under unconfoundedness, written through principal
/// scores: Pr{D(z)=d | R=r} = E[e_r(x) Pr(D=d|z,x)] / E[e_r(x)].
pub fn unconfounded_plugin(
    outcome: &dyn OutcomeModel,
    decision: &dyn DecisionModel,
    design: &Design,
    k: usize,
) -> Result<StratumDecisionTable> {
    check_design(design)?;
    let mut prob = [vec![vec![0.0; k + 1]; k + 2], vec![vec![0.0; k + 1]; k + 2]];
    for z in 0..2u8 {
        let e = |r: usize, x: &[f64]| match r {
            0 => 1.0 - outcome.prob_y(z, 0, x),
            r if r == k + 1 => outcome.prob_y(z, k, x),
            r => outcome.prob_y(z, r - 1, x) - outcome.prob_y(z, r, x),
        };
        for r in 0..k + 2 {
            let den = averaged(design, |x| e(r, x));
            if !(den > 0.0) {
                return Err(Error::NegativeStratumMass { stratum: r, mass: den });
            }
            for d in 0..=k {
                prob[z as usize][r][d] = averaged(design, |x| e(r, x) * decision.prob_d(z, d, x)) / den;
            }
        }
    }
    Ok(StratumDecisionTable { k, prob })
}
