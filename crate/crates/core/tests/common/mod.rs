#![allow(dead_code)]

use apce_core::data::encode::{encode_design, Design, Recipe};
use apce_core::data::Dataset;
use apce_core::synth::{AttributeLaw, CovariateLaw, DgpSpec};

pub fn two_groups() -> AttributeLaw {
    AttributeLaw::Uniform(vec!["a".into(), "b".into()])
}

/// n = 5000, k = 2, one normal and one coin covariate. Every stratum has
/// at least a few hundred cases.
pub fn effect_dgp(seed: u64) -> DgpSpec {
    DgpSpec {
        n: 5000,
        k: 2,
        covariates: vec![CovariateLaw::Normal, CovariateLaw::Coin],
        beta: vec![0.3, 0.4, 0.2, 0.1, 0.0],
        alpha: vec![1.2, -0.6],
        theta: [vec![-1.3, 1.5], vec![-1.2, 1.8]],
        delta: vec![-1.2, -0.1, 1.0],
        rho: 0.0,
        attribute: two_groups(),
        hearing_dates: None,
        dmf_threshold: None,
        seed,
    }
}

/// n = 2000, p = 3, k = 2 recovery design.
pub fn recovery_dgp(rho: f64, seed: u64) -> DgpSpec {
    DgpSpec {
        n: 2000,
        k: 2,
        covariates: vec![CovariateLaw::Normal, CovariateLaw::Normal, CovariateLaw::Coin],
        beta: vec![0.5, 0.8, -0.4, 0.3, 0.2, 0.1, -0.3],
        alpha: vec![0.6, 0.3, -0.5],
        theta: [vec![-0.4, 0.8], vec![-0.2, 1.1]],
        delta: vec![-0.9, 0.0, 0.8],
        rho,
        attribute: two_groups(),
        hearing_dates: None,
        dmf_threshold: None,
        seed,
    }
}

pub fn design(ds: &Dataset) -> Design {
    encode_design(ds, &Recipe::default_for(ds)).expect("default recipe encodes")
}

/// Two-sided p-value of a standard normal deviate.
pub fn normal_p(z: f64) -> f64 {
    2.0 * apce_core::numeric::normal::norm_sf(z.abs())
}
