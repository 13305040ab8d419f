//! Canonical data model for provision experiments: one record per case with
//! a binary provision indicator `z`, an ordinal decision `d ∈ {0..k}`, binary
//! outcomes, covariates, a protected attribute and an optional hearing order.

pub mod encode;
pub mod io;
pub mod kv;
pub mod schema;
pub mod reference;

pub use encode::{encode_design, Design, Recipe};
pub use io::{ingest_csv, write_csv};
pub use schema::Schema;

use crate::error::{Error, Result};
use serde::Serialize;
use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionScale {
    k: usize,
    labels: Vec<String>,
}

impl DecisionScale {
    pub fn new(k: usize, labels: Vec<String>) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidDataset("decision scale needs k >= 1".into()));
        }
        if labels.len() != k + 1 {
            return Err(Error::InvalidDataset(format!(
                "decision scale k={k} needs {} labels, got {}",
                k + 1,
                labels.len()
            )));
        }
        Ok(Self { k, labels })
    }

    /// Scale with labels `"0".."k"`.
    pub fn numbered(k: usize) -> Self {
        Self {
            k: k.max(1),
            labels: (0..=k.max(1)).map(|d| d.to_string()).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    pub z: u8,
    pub d: usize,
    /// Values aligned with `Dataset::outcome_names`.
    pub outcomes: Vec<u8>,
    /// Numeric covariates aligned with `Dataset::covariate_names`.
    pub covariates: Vec<f64>,
    /// Raw categorical covariates aligned with `Dataset::factor_names`.
    pub factors: Vec<String>,
    pub attribute: String,
    pub hearing_order: Option<u32>,
    pub dmf: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<CaseRecord>,
    scale: DecisionScale,
    outcome_names: Vec<String>,
    covariate_names: Vec<String>,
    factor_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: &'static str,
    pub message: String,
}

impl Dataset {
    /// Construct and validate; the first violation is returned as an error.
    pub fn new(
        records: Vec<CaseRecord>,
        scale: DecisionScale,
        outcome_names: Vec<String>,
        covariate_names: Vec<String>,
        factor_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self::new_unchecked(records, scale, outcome_names, covariate_names, factor_names);
        let mut seen = HashSet::new();
        for r in &ds.records {
            if !seen.insert(r.case_id.as_str()) {
                return Err(Error::DuplicateCaseId(r.case_id.clone()));
            }
        }
        if let Some(v) = validate_dataset(&ds).into_iter().next() {
            return Err(Error::InvalidDataset(v.message));
        }
        Ok(ds)
    }

    /// Construct without checks; use `validate_dataset` to inspect.
    pub fn new_unchecked(
        records: Vec<CaseRecord>,
        scale: DecisionScale,
        outcome_names: Vec<String>,
        covariate_names: Vec<String>,
        factor_names: Vec<String>,
    ) -> Self {
        Self {
            records,
            scale,
            outcome_names,
            covariate_names,
            factor_names,
        }
    }

    pub fn records(&self) -> &[CaseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn scale(&self) -> &DecisionScale {
        &self.scale
    }

    pub fn k(&self) -> usize {
        self.scale.k
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcome_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn z(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.z).collect()
    }

    pub fn d(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.d).collect()
    }

    pub fn attributes(&self) -> Vec<String> {
        self.records.iter().map(|r| r.attribute.clone()).collect()
    }

    pub fn outcome_index(&self, name: &str) -> Result<usize> {
        self.outcome_names
            .iter()
            .position(|o| o == name)
            .ok_or_else(|| Error::MissingColumn {
                column: format!("outcome `{name}`"),
            })
    }

    pub fn outcome(&self, name: &str) -> Result<Vec<u8>> {
        let j = self.outcome_index(name)?;
        Ok(self.records.iter().map(|r| r.outcomes[j]).collect())
    }

    pub fn arm_sizes(&self) -> (usize, usize) {
        let n1 = self.records.iter().filter(|r| r.z == 1).count();
        (self.records.len() - n1, n1)
    }

    /// Cases at the given positions (with repetition), preserving metadata.
    /// Case ids are suffixed with the draw position so they remain unique.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let records = indices
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let mut r = self.records[i].clone();
                r.case_id = format!("{}#{pos}", r.case_id);
                r
            })
            .collect();
        Self { records, ..self.clone_meta() }
    }

    /// Cases satisfying `keep`, ids unchanged.
    pub fn filter(&self, keep: impl Fn(&CaseRecord) -> bool) -> Self {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self { records, ..self.clone_meta() }
    }

    /// Same cases with decisions replaced.
    pub fn with_decisions(&self, d: &[usize]) -> Self {
        let mut out = self.clone();
        for (r, &di) in out.records.iter_mut().zip(d) {
            r.d = di;
        }
        out
    }

    /// Same cases with provision indicators replaced.
    pub fn with_treatment(&self, z: &[u8]) -> Self {
        let mut out = self.clone();
        for (r, &zi) in out.records.iter_mut().zip(z) {
            r.z = zi;
        }
        out
    }

    /// Decision scale collapsed to binary at `threshold` (d ≥ threshold ↦ 1).
    pub fn dichotomized(&self, threshold: usize) -> Result<Self> {
        if threshold < 1 || threshold > self.k() {
            return Err(Error::InvalidArgument(format!(
                "threshold {threshold} outside 1..={}",
                self.k()
            )));
        }
        let mut out = self.clone();
        for r in &mut out.records {
            r.d = (r.d >= threshold) as usize;
        }
        let lab = &self.scale.labels;
        out.scale = DecisionScale {
            k: 1,
            labels: vec![lab[..threshold].join("|"), lab[threshold..].join("|")],
        };
        Ok(out)
    }

    fn clone_meta(&self) -> Self {
        Self {
            records: Vec::new(),
            scale: self.scale.clone(),
            outcome_names: self.outcome_names.clone(),
            covariate_names: self.covariate_names.clone(),
            factor_names: self.factor_names.clone(),
        }
    }
}

/// List every invariant violation; empty iff the dataset is well formed.
pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = ds.scale.k;
    if k < 1 {
        out.push(Violation {
            kind: "scale",
            message: "decision scale needs k >= 1".into(),
        });
    }
    if ds.scale.labels.len() != k + 1 {
        out.push(Violation {
            kind: "scale",
            message: format!("expected {} decision labels, got {}", k + 1, ds.scale.labels.len()),
        });
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        let row = i + 1;
        if r.z > 1 {
            out.push(Violation {
                kind: "domain",
                message: format!("row {row}: z = {} not in {{0,1}}", r.z),
            });
        }
        if r.d > k {
            out.push(Violation {
                kind: "domain",
                message: format!("row {row}: d = {} not in 0..={k}", r.d),
            });
        }
        if r.outcomes.len() != ds.outcome_names.len() {
            out.push(Violation {
                kind: "shape",
                message: format!("row {row}: {} outcomes, expected {}", r.outcomes.len(), ds.outcome_names.len()),
            });
        } else {
            for (j, &y) in r.outcomes.iter().enumerate() {
                if y > 1 {
                    out.push(Violation {
                        kind: "domain",
                        message: format!("row {row}: outcome `{}` = {y} not binary", ds.outcome_names[j]),
                    });
                }
            }
        }
        if r.covariates.len() != ds.covariate_names.len() {
            out.push(Violation {
                kind: "shape",
                message: format!(
                    "row {row}: covariate dimension {}, expected {}",
                    r.covariates.len(),
                    ds.covariate_names.len()
                ),
            });
        } else if r.covariates.iter().any(|v| !v.is_finite()) {
            out.push(Violation {
                kind: "domain",
                message: format!("row {row}: non-finite covariate"),
            });
        }
        if r.factors.len() != ds.factor_names.len() {
            out.push(Violation {
                kind: "shape",
                message: format!("row {row}: {} factor values, expected {}", r.factors.len(), ds.factor_names.len()),
            });
        }
        if let Some(d) = r.dmf {
            if d > 1 {
                out.push(Violation {
                    kind: "domain",
                    message: format!("row {row}: dmf = {d} not binary"),
                });
            }
        }
        if r.hearing_order == Some(0) {
            out.push(Violation {
                kind: "domain",
                message: format!("row {row}: hearing order must be positive"),
            });
        }
        if let Some(first) = seen.insert(r.case_id.as_str(), row) {
            out.push(Violation {
                kind: "uniqueness",
                message: format!("case_id `{}` repeated (rows {first} and {row})", r.case_id),
            });
        }
    }
    for z in 0..=1u8 {
        if !ds.records.iter().any(|r| r.z == z) {
            out.push(Violation {
                kind: "arm",
                message: format!("arm empty: z={z}"),
            });
        }
    }
    out
}

/// Validation report as JSON lines.
pub fn report_json_lines(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| serde_json::to_string(v).expect("violation serializes") + "\n")
        .collect()
}
