//! Estimators that need no outcome model: intention-to-treat differences,
//! sign identification of the principal effects, nonparametric bounds on the
//! potential-outcome rates, and point identification under strong
//! monotonicity. All probabilities are exact count ratios.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::stats::quantile_sorted;
use crate::weights::bootstrap_replicates;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub enum IttTarget {
    /// Indicator of decision category `d`.
    Decision(usize),
    Outcome(String),
}

impl IttTarget {
    pub fn label(&self, ds: &Dataset) -> String {
        match self {
            IttTarget::Decision(d) => ds
                .scale()
                .labels()
                .get(*d)
                .cloned()
                .unwrap_or_else(|| format!("d={d}")),
            IttTarget::Outcome(o) => o.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IttEstimate {
    pub target: String,
    pub diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n1: usize,
    pub n0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsEstimate {
    pub target: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignEntry {
    pub effect: &'static str,
    pub numerator: f64,
    pub sign: i8,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Count-based cell probabilities for one outcome after dichotomizing the decision.
#[derive(Debug, Clone, Copy)]
struct Cells {
    n: [f64; 2],
    /// `[z][b][y]` counts, b = 1{d ≥ threshold}.
    c: [[[f64; 2]; 2]; 2],
}

impl Cells {
    fn from_cases(z: &[u8], d: &[usize], y: &[u8], threshold: usize, idx: Option<&[usize]>) -> Result<Self> {
        let mut c = [[[0.0; 2]; 2]; 2];
        let mut n = [0.0; 2];
        let mut add = |i: usize| {
            let zi = z[i] as usize;
            n[zi] += 1.0;
            c[zi][(d[i] >= threshold) as usize][y[i] as usize] += 1.0;
        };
        match idx {
            Some(ix) => ix.iter().for_each(|&i| add(i)),
            None => (0..z.len()).for_each(add),
        }
        for zz in 0..2u8 {
            if n[zz as usize] == 0.0 {
                return Err(Error::EmptyArm(zz));
            }
        }
        Ok(Self { n, c })
    }

    /// Pr(B=b, Y=y | Z=z).
    fn p(&self, z: usize, b: usize, y: usize) -> f64 {
        self.c[z][b][y] / self.n[z]
    }

    /// Pr(Y=y | Z=z).
    fn py(&self, z: usize, y: usize) -> f64 {
        (self.c[z][0][y] + self.c[z][1][y]) / self.n[z]
    }

    fn numerators(&self) -> [f64; 3] {
        [
            self.py(0, 1) - self.py(1, 1),
            self.p(1, 1, 1) - self.p(0, 1, 1),
            self.p(0, 0, 0) - self.p(1, 0, 0),
        ]
    }
}

fn check_threshold(ds: &Dataset, threshold: usize) -> Result<()> {
    if threshold < 1 || threshold > ds.k() {
        return Err(Error::InvalidArgument(format!(
            "dichotomization threshold {threshold} outside 1..={}",
            ds.k()
        )));
    }
    Ok(())
}

/// Difference in arm means of the target indicator with a two-sample
/// normal-approximation 95% interval.
pub fn diff_in_means_itt(ds: &Dataset, target: &IttTarget) -> Result<IttEstimate> {
    let ind: Vec<f64> = match target {
        IttTarget::Decision(d) => {
            if *d > ds.k() {
                return Err(Error::InvalidArgument(format!("decision {d} outside 0..={}", ds.k())));
            }
            ds.records().iter().map(|r| (r.d == *d) as u8 as f64).collect()
        }
        IttTarget::Outcome(o) => ds.outcome(o)?.into_iter().map(f64::from).collect(),
    };
    let (mut s, mut n) = ([0.0f64; 2], [0usize; 2]);
    for (r, v) in ds.records().iter().zip(&ind) {
        s[r.z as usize] += v;
        n[r.z as usize] += 1;
    }
    for z in 0..2u8 {
        if n[z as usize] == 0 {
            return Err(Error::EmptyArm(z));
        }
    }
    let p1 = s[1] / n[1] as f64;
    let p0 = s[0] / n[0] as f64;
    let diff = p1 - p0;
    let se = (p1 * (1.0 - p1) / n[1] as f64 + p0 * (1.0 - p0) / n[0] as f64).sqrt();
    Ok(IttEstimate {
        target: target.label(ds),
        diff,
        ci_low: diff - 1.959_963_984_540_054 * se,
        ci_high: diff + 1.959_963_984_540_054 * se,
        n1: n[1],
        n0: n[0],
    })
}

/// The three sign-identifying numerators for the preventable, risky and safe
/// strata with percentile-bootstrap intervals (`b` replicates).
pub fn apce_sign_table(
    ds: &Dataset,
    outcome: &str,
    threshold: usize,
    b: usize,
    seed: u64,
) -> Result<Vec<SignEntry>> {
    check_threshold(ds, threshold)?;
    let z = ds.z();
    let d = ds.d();
    let y = ds.outcome(outcome)?;
    let point = Cells::from_cases(&z, &d, &y, threshold, None)?.numerators();
    let reps = bootstrap_replicates(ds, b, seed, "signs.bootstrap", |_, idx| {
        Ok(Cells::from_cases(&z, &d, &y, threshold, Some(idx))?.numerators().to_vec())
    })?;
    let names = ["APCEp", "APCEr", "APCEs"];
    Ok((0..3)
        .map(|j| {
            let mut v: Vec<f64> = reps.iter().map(|r| r[j]).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            SignEntry {
                effect: names[j],
                numerator: point[j],
                sign: if point[j] > 0.0 {
                    1
                } else if point[j] < 0.0 {
                    -1
                } else {
                    0
                },
                ci_low: quantile_sorted(&v, 0.025).min(point[j]),
                ci_high: quantile_sorted(&v, 0.975).max(point[j]),
            }
        })
        .collect())
}

/// Sharp bounds on Pr{Y(1)=1} and Pr{Y(0)=1} under monotonicity.
pub fn potential_outcome_bounds(ds: &Dataset, outcome: &str, threshold: usize) -> Result<[BoundsEstimate; 2]> {
    check_threshold(ds, threshold)?;
    let c = Cells::from_cases(&ds.z(), &ds.d(), &ds.outcome(outcome)?, threshold, None)?;
    let y1_lo = c.p(0, 1, 1).max(c.p(1, 1, 1));
    let y1_hi = c.py(0, 1).min(c.py(1, 1));
    let y0_lo = c.py(0, 1).max(c.py(1, 1));
    let y0_hi = 1.0 - c.p(0, 0, 0).max(c.p(1, 0, 0));
    let out = [
        BoundsEstimate {
            target: "Pr{Y(1)=1}".into(),
            lower: y1_lo,
            upper: y1_hi,
        },
        BoundsEstimate {
            target: "Pr{Y(0)=1}".into(),
            lower: y0_lo,
            upper: y0_hi,
        },
    ];
    for b in &out {
        if b.lower > b.upper {
            return Err(Error::BoundsCrossed {
                target: b.target.clone(),
                lower: b.lower,
                upper: b.upper,
            });
        }
    }
    Ok(out)
}

/// User-supplied Pr{Y(0)=1}: a point or an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prob {
    Point(f64),
    Interval(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongMonoEstimate {
    pub apce_p: (f64, f64),
    pub apce_s: (f64, f64),
}

/// Identification when the harsher decision always prevents the outcome.
/// A point input gives degenerate intervals.
pub fn apce_strong_mono(ds: &Dataset, outcome: &str, threshold: usize, pr_y0: Prob) -> Result<StrongMonoEstimate> {
    check_threshold(ds, threshold)?;
    let (lo, hi) = match pr_y0 {
        Prob::Point(p) => (p, p),
        Prob::Interval(a, b) => (a.min(b), a.max(b)),
    };
    if !(lo >= 0.0 && hi <= 1.0) {
        return Err(Error::InvalidArgument(format!("Pr{{Y(0)=1}} range [{lo}, {hi}] outside [0,1]")));
    }
    if lo <= 0.0 {
        return Err(Error::DivisionByZero("Pr{Y(0)=1} = 0".into()));
    }
    if hi >= 1.0 {
        return Err(Error::DivisionByZero("Pr{Y(0)=0} = 0".into()));
    }
    let c = Cells::from_cases(&ds.z(), &ds.d(), &ds.outcome(outcome)?, threshold, None)?;
    let np = c.p(0, 0, 1) - c.p(1, 0, 1);
    let ns = c.p(0, 0, 0) - c.p(1, 0, 0);
    let span = |num: f64, a: f64, b: f64| {
        let (u, v) = (num / a, num / b);
        (u.min(v), u.max(v))
    };
    Ok(StrongMonoEstimate {
        apce_p: span(np, lo, hi),
        apce_s: span(ns, 1.0 - hi, 1.0 - lo),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::reference::reconstruct;
    use crate::data::testutil::tiny;

    #[test]
    fn table_reconstruction_itt() {
        let ds = reconstruct();
        let sig = diff_in_means_itt(&ds, &IttTarget::Decision(0)).unwrap();
        assert!((sig.diff - (705.0 / 948.0 - 705.0 / 943.0)).abs() < 1e-15);
        assert!((sig.diff + 0.00394).abs() < 1e-5);
        let fta = diff_in_means_itt(&ds, &IttTarget::Outcome("fta".into())).unwrap();
        assert!((fta.diff - 0.00479).abs() < 1e-5);
        assert!(fta.ci_low <= fta.diff && fta.diff <= fta.ci_high);
        assert_eq!((fta.n0, fta.n1), (943, 948));
    }

    #[test]
    fn identical_arms_give_zero() {
        let half = [(0u8, 0usize, 1u8), (0, 1, 0), (0, 2, 1), (0, 0, 0)];
        let mut cells = half.to_vec();
        cells.extend(half.iter().map(|&(_, d, y)| (1u8, d, y)));
        let ds = tiny(2, &cells);
        assert_eq!(diff_in_means_itt(&ds, &IttTarget::Decision(1)).unwrap().diff, 0.0);
        let sm = apce_strong_mono(&ds, "y", 1, Prob::Interval(0.2, 0.7)).unwrap();
        assert_eq!(sm.apce_p, (0.0, 0.0));
        assert_eq!(sm.apce_s, (0.0, 0.0));
    }

    #[test]
    fn sign_numerators_and_bounds() {
        let ds = reconstruct();
        let t = apce_sign_table(&ds, "fta", 1, 200, 1).unwrap();
        assert!((t[0].numerator - (276.0 / 943.0 - 282.0 / 948.0)).abs() < 1e-15);
        assert!((t[1].numerator - (61.0 / 948.0 - 58.0 / 943.0)).abs() < 1e-15);
        assert!((t[2].numerator - (487.0 / 943.0 - 484.0 / 948.0)).abs() < 1e-15);
        assert_eq!([t[0].sign, t[1].sign, t[2].sign], [-1, 1, 1]);
        let itt = diff_in_means_itt(&ds, &IttTarget::Outcome("fta".into())).unwrap();
        assert_eq!(t[0].numerator, -itt.diff);
        let [b1, b0] = potential_outcome_bounds(&ds, "fta", 1).unwrap();
        assert!((b1.lower - 61.0 / 948.0).abs() < 1e-15);
        assert!((b1.upper - 276.0 / 943.0).abs() < 1e-15);
        assert!((b0.lower - 0.29747).abs() < 1e-5);
        assert!((b0.upper - 0.48356).abs() < 1e-5);
    }

    #[test]
    fn bounds_on_hand_enumerated_table() {
        // Detained cases always have Y=1, released never do; 3 of 8 detained
        // in each arm. Every cell probability is 3/8 or 5/8, so both
        // intervals collapse to 3/8.
        let mut cells = vec![];
        for z in 0..2u8 {
            cells.extend(std::iter::repeat((z, 1usize, 1u8)).take(3));
            cells.extend(std::iter::repeat((z, 0usize, 0u8)).take(5));
        }
        let ds = tiny(1, &cells);
        let [b1, b0] = potential_outcome_bounds(&ds, "y", 1).unwrap();
        assert_eq!((b1.lower, b1.upper), (0.375, 0.375));
        assert_eq!((b0.lower, b0.upper), (0.375, 0.375));
        // One more detention under z=1 pushes the lower bound above the upper.
        cells[11] = (1, 1, 1);
        let ds = tiny(1, &cells);
        assert!(matches!(
            potential_outcome_bounds(&ds, "y", 1),
            Err(Error::BoundsCrossed { .. })
        ));
    }

    #[test]
    fn strong_mono_division_by_zero() {
        let ds = reconstruct();
        assert!(matches!(
            apce_strong_mono(&ds, "fta", 1, Prob::Point(1.0)),
            Err(Error::DivisionByZero(_))
        ));
        assert!(matches!(
            apce_strong_mono(&ds, "fta", 1, Prob::Point(0.0)),
            Err(Error::DivisionByZero(_))
        ));
    }
}
