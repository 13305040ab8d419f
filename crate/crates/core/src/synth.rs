//! Synthetic data from the joint decision/risk model with the potential
//! decisions and risk strata kept as ground truth.
//!
//! Both potential decisions share one ε1 draw, so (D(0), D(1)) is a proper
//! joint outcome per case and oracle effects are plain averages.

use crate::bayes::DrawView;
use crate::data::{CaseRecord, DecisionScale, Dataset};
use crate::error::{Error, Result};
use crate::rng::substream;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateLaw {
    Normal,
    Coin,
}

/// How the protected attribute is assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttributeLaw {
    /// Uniform over labels, independent of everything else.
    Uniform(Vec<String>),
    /// Label chosen by a coin covariate: `labels[x_j]`.
    FromCovariate { covariate: usize, labels: [String; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub k: usize,
    pub covariates: Vec<CovariateLaw>,
    /// (β_Z, β_X, β_ZX), length 2p+1.
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub theta: [Vec<f64>; 2],
    pub delta: Vec<f64>,
    pub rho: f64,
    pub attribute: AttributeLaw,
    /// Hearing dates drawn uniformly from 1..=dates when set.
    pub hearing_dates: Option<u32>,
    /// DMF recommendation 1{xα > t} when set.
    pub dmf_threshold: Option<f64>,
    pub seed: u64,
}

impl DgpSpec {
    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        let k = self.k;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if k == 0 {
            return bad("k must be at least 1");
        }
        if self.beta.len() != 2 * p + 1 || self.alpha.len() != p {
            return bad("coefficient lengths do not match the covariate count");
        }
        if self.theta.iter().any(|t| t.len() != k || t.windows(2).any(|w| w[0] >= w[1])) {
            return bad("each theta row needs k strictly increasing cutpoints");
        }
        if self.delta.len() != k + 1 || self.delta.windows(2).any(|w| w[0] > w[1]) {
            return bad("delta needs k+1 non-decreasing cutpoints");
        }
        if !(self.rho.abs() < 1.0) {
            return bad("rho must lie in (-1, 1)");
        }
        match &self.attribute {
            AttributeLaw::Uniform(l) if l.is_empty() => return bad("attribute law needs labels"),
            AttributeLaw::FromCovariate { covariate, .. }
                if self.covariates.get(*covariate) != Some(&CovariateLaw::Coin) =>
            {
                return bad("attribute must follow a coin covariate")
            }
            _ => {}
        }
        Ok(())
    }

    /// Parameter vector in draw layout.
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend(&self.alpha);
        v.extend(&self.theta[0]);
        v.extend(&self.theta[1]);
        v.extend(&self.delta);
        v
    }
}

/// Per-case ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTruth {
    pub k: usize,
    pub case_ids: Vec<String>,
    pub r: Vec<usize>,
    pub d0: Vec<usize>,
    pub d1: Vec<usize>,
    pub attributes: Vec<String>,
    /// Latent residuals (ε1, ε2).
    pub residuals: Vec<(f64, f64)>,
}

impl OracleTruth {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Y_i(d) = 1{R_i > d}.
    pub fn potential_outcome(&self, i: usize, d: usize) -> u8 {
        u8::from(self.r[i] > d)
    }

    pub fn potential_decision(&self, i: usize, z: u8) -> usize {
        if z == 1 {
            self.d1[i]
        } else {
            self.d0[i]
        }
    }

    /// Share of cases in each stratum 0..=k+1.
    pub fn proportions(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.k + 2];
        for &r in &self.r {
            c[r] += 1.0;
        }
        let n = self.len().max(1) as f64;
        c.iter().map(|v| v / n).collect()
    }

    /// (case_id, R, D0, D1) as CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("case_id,R,D0,D1\n");
        for i in 0..self.len() {
            let _ = writeln!(s, "{},{},{},{}", self.case_ids[i], self.r[i], self.d0[i], self.d1[i]);
        }
        s
    }
}

fn count_below(cuts: &[f64], v: f64) -> usize {
    cuts.iter().filter(|&&c| c < v).count()
}

/// Simulate a dataset with outcome `y`, covariates `x1..xp`.
pub fn synth_generate(spec: &DgpSpec) -> Result<(Dataset, OracleTruth)> {
    spec.validate()?;
    let p = spec.p();
    let k = spec.k;
    let mut rng = substream(spec.seed, "synth", 0);
    let view = DrawView {
        beta: &spec.beta,
        alpha: &spec.alpha,
        theta: [&spec.theta[0], &spec.theta[1]],
        delta: &spec.delta,
    };
    let s = (1.0 - spec.rho * spec.rho).sqrt();
    let mut records = Vec::with_capacity(spec.n);
    let mut truth = OracleTruth {
        k,
        case_ids: Vec::with_capacity(spec.n),
        r: Vec::with_capacity(spec.n),
        d0: Vec::with_capacity(spec.n),
        d1: Vec::with_capacity(spec.n),
        attributes: Vec::with_capacity(spec.n),
        residuals: Vec::with_capacity(spec.n),
    };
    for i in 0..spec.n {
        let x: Vec<f64> = spec
            .covariates
            .iter()
            .map(|law| match law {
                CovariateLaw::Normal => rng.sample(StandardNormal),
                CovariateLaw::Coin => f64::from(u8::from(rng.random::<bool>())),
            })
            .collect();
        let e1: f64 = rng.sample(StandardNormal);
        let e2 = spec.rho * e1 + s * rng.sample::<f64, _>(StandardNormal);
        let d0 = count_below(&spec.theta[0], view.decision_index(&x, 0) + e1);
        let d1 = count_below(&spec.theta[1], view.decision_index(&x, 1) + e1);
        let risk = view.risk_index(&x);
        let r = count_below(&spec.delta, risk + e2);
        let z = u8::from(rng.random::<bool>());
        let d = if z == 1 { d1 } else { d0 };
        let attribute = match &spec.attribute {
            AttributeLaw::Uniform(labels) => labels[rng.random_range(0..labels.len())].clone(),
            AttributeLaw::FromCovariate { covariate, labels } => labels[(x[*covariate] > 0.5) as usize].clone(),
        };
        let hearing_order = spec.hearing_dates.map(|m| rng.random_range(1..=m));
        let dmf = spec.dmf_threshold.map(|t| u8::from(risk > t));
        let case_id = format!("s{i}");
        truth.case_ids.push(case_id.clone());
        truth.r.push(r);
        truth.d0.push(d0);
        truth.d1.push(d1);
        truth.attributes.push(attribute.clone());
        truth.residuals.push((e1, e2));
        records.push(CaseRecord {
            case_id,
            z,
            d,
            outcomes: vec![u8::from(r > d)],
            covariates: x,
            factors: Vec::new(),
            attribute,
            hearing_order,
            dmf,
        });
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let ds = Dataset::new_unchecked(records, DecisionScale::numbered(k), vec!["y".into()], names, Vec::new());
    Ok((ds, truth))
}

/// Finite-population effects computed from the truth table. Empty strata
/// give NaN entries and are listed in `empty_strata`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleApce {
    /// APCE(d, r) indexed `[d][r]`.
    pub apce: Vec<Vec<f64>>,
    /// APCEp(r) for r = 1..=k, stored at index r − 1.
    pub apce_p: Vec<f64>,
    pub apce_s: f64,
    pub proportions: Vec<f64>,
    pub empty_strata: Vec<usize>,
    /// Mean of Y(D(1)) − Y(D(0)).
    pub itt: f64,
}

pub fn oracle_apce(truth: &OracleTruth) -> OracleApce {
    let k = truth.k;
    let n = truth.len();
    let mut count = vec![0usize; k + 2];
    let mut hits = vec![vec![[0i64; 2]; k + 2]; k + 1];
    let mut at_least = vec![[0i64; 2]; k + 2];
    let mut itt = 0i64;
    for i in 0..n {
        let r = truth.r[i];
        count[r] += 1;
        for (z, d) in [truth.d0[i], truth.d1[i]].into_iter().enumerate() {
            hits[d][r][z] += 1;
            if d >= r {
                at_least[r][z] += 1;
            }
        }
        itt += i64::from(truth.potential_outcome(i, truth.d1[i])) - i64::from(truth.potential_outcome(i, truth.d0[i]));
    }
    let rate = |c: [i64; 2], r: usize| {
        if count[r] == 0 {
            f64::NAN
        } else {
            (c[1] - c[0]) as f64 / count[r] as f64
        }
    };
    let apce: Vec<Vec<f64>> = (0..=k).map(|d| (0..k + 2).map(|r| rate(hits[d][r], r)).collect()).collect();
    OracleApce {
        apce_p: (1..=k).map(|r| rate(at_least[r], r)).collect(),
        apce_s: apce[0][0],
        apce,
        proportions: truth.proportions(),
        empty_strata: (0..k + 2).filter(|&r| count[r] == 0).collect(),
        itt: if n == 0 { f64::NAN } else { itt as f64 / n as f64 },
    }
}

/// Δ_r(z) from the truth: largest gap in Pr(D(z) ≥ d | A, R = r) over
/// attribute pairs and d ≥ 1. `keep` restricts the cases considered.
pub fn oracle_fairness(truth: &OracleTruth, r: usize, z: u8, keep: Option<&[bool]>) -> Result<f64> {
    let mut groups: Vec<String> = truth.attributes.clone();
    groups.sort();
    groups.dedup();
    if groups.len() < 2 {
        return Err(Error::EmptyGroup("fewer than two attribute groups".into()));
    }
    let k = truth.k;
    let mut best = 0.0f64;
    let mut rates = vec![vec![0.0; k + 1]; groups.len()];
    for (g, label) in groups.iter().enumerate() {
        let idx: Vec<usize> = (0..truth.len())
            .filter(|&i| keep.is_none_or(|m| m[i]) && &truth.attributes[i] == label && truth.r[i] == r)
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyGroup(format!("{label} has no cases in stratum {r}")));
        }
        for d in 1..=k {
            let c = idx.iter().filter(|&&i| truth.potential_decision(i, z) >= d).count();
            rates[g][d] = c as f64 / idx.len() as f64;
        }
    }
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            for d in 1..=k {
                best = best.max((rates[a][d] - rates[b][d]).abs());
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_dataset;
    use crate::numeric::normal::norm_cdf;

    pub(crate) fn base_spec(n: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            n,
            k: 2,
            covariates: vec![CovariateLaw::Normal, CovariateLaw::Coin],
            beta: vec![0.4, 0.8, 0.5, 0.2, -0.3],
            alpha: vec![0.7, -0.4],
            theta: [vec![-0.3, 0.9], vec![-0.2, 1.1]],
            delta: vec![-0.8, 0.1, 0.9],
            rho: 0.0,
            attribute: AttributeLaw::Uniform(vec!["a".into(), "b".into()]),
            hearing_dates: None,
            dmf_threshold: None,
            seed,
        }
    }

    #[test]
    fn generated_data_is_valid_and_monotone() {
        let (ds, truth) = synth_generate(&base_spec(2000, 1)).unwrap();
        assert!(validate_dataset(&ds).is_empty());
        let y = ds.outcome("y").unwrap();
        for (i, rec) in ds.records().iter().enumerate() {
            assert_eq!(rec.d, truth.potential_decision(i, rec.z));
            assert_eq!(y[i], truth.potential_outcome(i, rec.d));
            for d in 1..=2 {
                assert!(truth.potential_outcome(i, d) <= truth.potential_outcome(i, d - 1));
            }
        }
    }

    #[test]
    fn no_treatment_terms_means_identical_decisions() {
        let mut spec = base_spec(3000, 2);
        spec.beta[0] = 0.0;
        spec.beta[3] = 0.0;
        spec.beta[4] = 0.0;
        spec.theta[1] = spec.theta[0].clone();
        let (_, truth) = synth_generate(&spec).unwrap();
        assert_eq!(truth.d0, truth.d1);
        let o = oracle_apce(&truth);
        assert!(o.apce.iter().flatten().all(|&v| v == 0.0));
        assert!(o.apce_p.iter().all(|&v| v == 0.0));
        assert_eq!(o.itt, 0.0);
    }

    #[test]
    fn independent_residuals_at_zero_rho() {
        let (_, truth) = synth_generate(&base_spec(100_000, 3)).unwrap();
        let n = truth.len() as f64;
        let (mut s1, mut s2, mut s12, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(a, b) in &truth.residuals {
            s1 += a;
            s2 += b;
            s12 += a * b;
            q1 += a * a;
            q2 += b * b;
        }
        let cov = s12 / n - s1 * s2 / n / n;
        let corr = cov / ((q1 / n - (s1 / n).powi(2)) * (q2 / n - (s2 / n).powi(2))).sqrt();
        assert!(corr.abs() < 0.01, "{corr}");
    }

    #[test]
    fn strata_match_normal_gaps_without_covariate_effect() {
        let mut spec = base_spec(100_000, 4);
        spec.alpha = vec![0.0, 0.0];
        let (_, truth) = synth_generate(&spec).unwrap();
        let props = truth.proportions();
        let d = &spec.delta;
        let expect = [
            norm_cdf(d[0]),
            norm_cdf(d[1]) - norm_cdf(d[0]),
            norm_cdf(d[2]) - norm_cdf(d[1]),
            1.0 - norm_cdf(d[2]),
        ];
        for r in 0..4 {
            assert!((props[r] - expect[r]).abs() < 0.01, "stratum {r}");
        }
    }

    #[test]
    fn hand_truth_table() {
        // Three cases with k = 1:
        // case 0: R=1, D0=0, D1=1; case 1: R=1, D0=1, D1=1; case 2: R=0, D0=1, D1=0.
        let truth = OracleTruth {
            k: 1,
            case_ids: vec!["a".into(), "b".into(), "c".into()],
            r: vec![1, 1, 0],
            d0: vec![0, 1, 1],
            d1: vec![1, 1, 0],
            attributes: vec!["g".into(); 3],
            residuals: vec![(0.0, 0.0); 3],
        };
        let o = oracle_apce(&truth);
        // Stratum 1: Pr(D1 ≥ 1) = 1, Pr(D0 ≥ 1) = 1/2.
        assert_eq!(o.apce_p, vec![0.5]);
        // Stratum 0: Pr(D1 = 0) = 1, Pr(D0 = 0) = 0.
        assert_eq!(o.apce_s, 1.0);
        assert_eq!(o.empty_strata, vec![2]);
        assert!(o.apce[0][2].is_nan());
        // Y(D(1)) − Y(D(0)): case 0 goes 1 → 0, others unchanged.
        assert!((o.itt + 1.0 / 3.0).abs() < 1e-15);
        // Reduction identity: Σ_r APCEp(r)·π_r = −ITT.
        assert!((o.apce_p[0] * o.proportions[1] + o.itt).abs() < 1e-15);
    }

    #[test]
    fn fairness_oracle_needs_two_groups() {
        let (_, truth) = synth_generate(&base_spec(200, 5)).unwrap();
        assert!(oracle_fairness(&truth, 1, 0, None).unwrap() >= 0.0);
        let mut one = truth.clone();
        one.attributes = vec!["a".into(); one.len()];
        assert!(matches!(oracle_fairness(&one, 1, 0, None), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = base_spec(10, 1);
        s.theta[0] = vec![1.0, 0.0];
        assert!(synth_generate(&s).is_err());
        let mut s = base_spec(10, 1);
        s.attribute = AttributeLaw::FromCovariate {
            covariate: 0,
            labels: ["a".into(), "b".into()],
        };
        assert!(synth_generate(&s).is_err());
    }
}
