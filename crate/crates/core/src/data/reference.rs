//! Case-level reference dataset reconstructed from published marginal
//! counts of a pretrial provision experiment (1891 cases, three decision
//! categories, three binary outcomes and a four-level race×gender attribute).
//!
//! Outcome and attribute margins are each exact within every (z, d) cell;
//! their joint placement inside a cell is arbitrary (sequential blocks).

use super::{CaseRecord, DecisionScale, Dataset};
use crate::rng::substream;
use rand::seq::SliceRandom;
use rand::Rng;

pub const DECISION_LABELS: [&str; 3] = ["signature", "cash_le_1000", "cash_gt_1000"];
pub const OUTCOMES: [&str; 3] = ["fta", "nca", "nvca"];
pub const ATTRIBUTES: [&str; 4] = ["nonwhite_female", "white_female", "nonwhite_male", "white_male"];

/// Attribute counts by decision: `[z][attribute][d]`.
const ATTRIBUTE_COUNTS: [[[usize; 3]; 4]; 2] = [
    [[64, 11, 6], [91, 17, 7], [261, 56, 49], [289, 48, 44]],
    [[67, 6, 0], [104, 17, 10], [258, 53, 57], [276, 54, 46]],
];

/// Cases with the outcome by decision: `[z][outcome][d]`.
const OUTCOME_COUNTS: [[[usize; 3]; 3]; 2] = [
    [[218, 42, 16], [211, 39, 14], [36, 10, 3]],
    [[221, 45, 16], [202, 40, 17], [44, 10, 6]],
];

/// The 1891-case reconstruction (943 control, 948 treated). No covariates.
pub fn reconstruct() -> Dataset {
    let mut records = Vec::with_capacity(1891);
    for z in 0..2usize {
        for d in 0..3usize {
            let mut within = 0usize;
            for (a, counts) in ATTRIBUTE_COUNTS[z].iter().enumerate() {
                for _ in 0..counts[d] {
                    let outcomes = (0..3)
                        .map(|o| (within < OUTCOME_COUNTS[z][o][d]) as u8)
                        .collect();
                    records.push(CaseRecord {
                        case_id: format!("t1-{}", records.len() + 1),
                        z: z as u8,
                        d,
                        outcomes,
                        covariates: vec![],
                        factors: vec![],
                        attribute: ATTRIBUTES[a].to_string(),
                        hearing_order: None,
                        dmf: None,
                    });
                    within += 1;
                }
            }
        }
    }
    Dataset::new(
        records,
        DecisionScale::new(3 - 1, DECISION_LABELS.iter().map(|s| s.to_string()).collect())
            .expect("static scale"),
        OUTCOMES.iter().map(|s| s.to_string()).collect(),
        vec![],
        vec![],
    )
    .expect("static reconstruction is valid")
}

/// Copy of `ds` with hearing orders drawn uniformly from `1..=dates`, every
/// date receiving at least one case.
pub fn with_random_hearing_dates(ds: &Dataset, dates: u32, seed: u64) -> Dataset {
    assert!(dates >= 1 && dates as usize <= ds.len(), "need 1 <= dates <= n");
    let mut rng = substream(seed, "reference.dates", 0);
    let mut order: Vec<u32> = (1..=dates).collect();
    order.extend((dates as usize..ds.len()).map(|_| rng.random_range(1..=dates)));
    order.shuffle(&mut rng);
    let mut records = ds.records().to_vec();
    for (r, o) in records.iter_mut().zip(order) {
        r.hearing_order = Some(o);
    }
    Dataset::new_unchecked(
        records,
        ds.scale().clone(),
        ds.outcome_names().to_vec(),
        ds.covariate_names().to_vec(),
        ds.factor_names().to_vec(),
    )
}
