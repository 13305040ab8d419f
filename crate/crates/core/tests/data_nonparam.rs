mod common;

use apce_core::data::io::{ingest_csv, write_csv};
use apce_core::data::reference;
use apce_core::data::{validate_dataset, CaseRecord, DecisionScale, Dataset};
use apce_core::nonparam::{
    apce_sign_table, apce_strong_mono, diff_in_means_itt, potential_outcome_bounds, IttTarget, Prob,
};
use apce_core::synth::{oracle_apce, synth_generate, CovariateLaw, DgpSpec};
use common::{effect_dgp, two_groups};
use proptest::prelude::*;

#[test]
fn table_reconstruction_survives_csv_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reference.csv");
    let original = reference::reconstruct();
    let schema = write_csv(&original, &path).unwrap();
    let ds = ingest_csv(&path, &schema).unwrap();
    assert_eq!(ds.len(), 1891);
    assert_eq!(ds.arm_sizes(), (943, 948));
    assert_eq!(ds, original);
    assert!(validate_dataset(&ds).is_empty());

    let itt = |t: IttTarget| diff_in_means_itt(&ds, &t).unwrap().diff;
    assert!((itt(IttTarget::Decision(0)) - (705.0 / 948.0 - 705.0 / 943.0)).abs() < 1e-12);
    assert!((itt(IttTarget::Decision(0)) + 0.00394).abs() < 1e-5);
    assert!((itt(IttTarget::Outcome("fta".into())) - 0.00479).abs() < 1e-5);
}

#[test]
fn synthetic_dataset_round_trips_bit_exactly() {
    let spec = DgpSpec {
        n: 500,
        hearing_dates: Some(40),
        dmf_threshold: Some(0.2),
        ..effect_dgp(9)
    };
    let (ds, _) = synth_generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let schema = write_csv(&ds, &first).unwrap();
    let back = ingest_csv(&first, &schema).unwrap();
    assert_eq!(back, ds);
    for (a, b) in ds.records().iter().zip(back.records()) {
        for (u, v) in a.covariates.iter().zip(&b.covariates) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
    let second = dir.path().join("b.csv");
    write_csv(&back, &second).unwrap();
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn identical_arms_have_zero_itt() {
    let base = reference::reconstruct();
    let control: Vec<CaseRecord> = base.records().iter().filter(|r| r.z == 0).cloned().collect();
    let mut records = control.clone();
    for (i, r) in control.iter().enumerate() {
        records.push(CaseRecord {
            case_id: format!("copy-{i}"),
            z: 1,
            ..r.clone()
        });
    }
    let ds = Dataset::new(
        records,
        base.scale().clone(),
        base.outcome_names().to_vec(),
        vec![],
        vec![],
    )
    .unwrap();
    for t in [IttTarget::Decision(0), IttTarget::Decision(2), IttTarget::Outcome("nca".into())] {
        assert_eq!(diff_in_means_itt(&ds, &t).unwrap().diff, 0.0);
    }
}

/// Binary-decision DGP with random coefficients.
fn random_binary_dgp(seed: u64) -> DgpSpec {
    use rand::Rng;
    let mut rng = apce_core::rng::substream(seed, "bounds.dgp", 0);
    let mut u = |a: f64, b: f64| a + (b - a) * rng.random::<f64>();
    let t0 = u(-0.8, 0.8);
    let d0 = u(-1.0, 0.0);
    DgpSpec {
        n: 2000,
        k: 1,
        covariates: vec![CovariateLaw::Normal, CovariateLaw::Coin],
        beta: vec![u(-0.8, 0.8), u(-1.0, 1.0), u(-0.5, 0.5), u(-0.3, 0.3), u(-0.3, 0.3)],
        alpha: vec![u(-1.0, 1.0), u(-0.5, 0.5)],
        theta: [vec![t0], vec![t0 + u(-0.5, 0.5)]],
        delta: vec![d0, d0 + u(0.0, 1.5)],
        rho: u(-0.5, 0.5),
        attribute: two_groups(),
        hearing_dates: None,
        dmf_threshold: None,
        seed,
    }
}

#[test]
fn bounds_contain_the_truth_on_random_models() {
    for seed in 0..100 {
        let (ds, truth) = synth_generate(&random_binary_dgp(seed)).unwrap();
        let share = truth.proportions();
        // With k = 1: Y(1) = 1{R = 2}, Y(0) = 1{R ≥ 1}.
        let targets = [share[2], share[1] + share[2]];
        let (n0, n1) = ds.arm_sizes();
        let Ok(bounds) = potential_outcome_bounds(&ds, "y", 1) else {
            panic!("seed {seed}: bounds crossed under a monotone model");
        };
        for (b, t) in bounds.iter().zip(targets) {
            // Bounds are arm-level sample proportions; allow three binomial SEs.
            let slack = 3.0 * (0.25 / n0.min(n1) as f64).sqrt();
            assert!(b.lower - slack <= t && t <= b.upper + slack, "seed {seed}: {b:?} vs {t}");
        }
    }
}

#[test]
fn strong_monotonicity_recovers_the_oracle() {
    // δ_1 far out: nobody is in the highest stratum, so Y(1) ≡ 0.
    let spec = DgpSpec {
        n: 5000,
        k: 1,
        covariates: vec![CovariateLaw::Normal],
        beta: vec![0.6, 0.5, 0.2],
        alpha: vec![0.7],
        theta: [vec![0.4], vec![0.1]],
        delta: vec![-0.3, 50.0],
        rho: 0.0,
        attribute: two_groups(),
        hearing_dates: None,
        dmf_threshold: None,
        seed: 5,
    };
    let (ds, truth) = synth_generate(&spec).unwrap();
    let o = oracle_apce(&truth);
    assert_eq!(o.proportions[2], 0.0);
    let pr_y0 = o.proportions[1];
    let est = apce_strong_mono(&ds, "y", 1, Prob::Point(pr_y0)).unwrap();
    assert!((est.apce_p.0 - o.apce_p[0]).abs() < 0.03, "{:?} vs {}", est.apce_p, o.apce_p[0]);
    assert_eq!(est.apce_p.0, est.apce_p.1);
}

fn small_dataset(cells: &[(u8, usize, u8)]) -> Dataset {
    let records = cells
        .iter()
        .enumerate()
        .map(|(i, &(z, d, y))| CaseRecord {
            case_id: format!("c{i}"),
            z,
            d,
            outcomes: vec![y],
            covariates: vec![],
            factors: vec![],
            attribute: "a".into(),
            hearing_order: None,
            dmf: None,
        })
        .collect();
    Dataset::new_unchecked(records, DecisionScale::numbered(2), vec!["y".into()], vec![], vec![])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn preventable_numerator_is_minus_the_outcome_itt(
        cells in prop::collection::vec((0u8..2, 0usize..3, 0u8..2), 4..80),
        threshold in 1usize..3,
    ) {
        let mut cells = cells;
        cells.push((0, 0, 0));
        cells.push((1, 0, 0));
        let ds = small_dataset(&cells);
        let signs = apce_sign_table(&ds, "y", threshold, 100, 1).unwrap();
        let itt = diff_in_means_itt(&ds, &IttTarget::Outcome("y".into())).unwrap().diff;
        prop_assert!((signs[0].numerator + itt).abs() < 1e-15);
        for e in &signs {
            prop_assert!((-1.0..=1.0).contains(&e.numerator));
        }
    }
}
