//! Explicit mapping from CSV columns to dataset fields.
//!
//! ```text
//! case_id = id
//! z = treated
//! d = decision
//! k = 2
//! labels = signature, cash_low, cash_high
//! outcome.fta = y_fta
//! covariates = age, priors
//! factors = charge_class
//! attribute = group
//! hearing_order = date_order
//! dmf = dmf_cash
//! ```

use super::kv::KeyValues;
use super::Dataset;
use crate::error::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    /// Absent: ids are the 1-based row numbers.
    pub case_id: Option<String>,
    pub z: String,
    pub d: String,
    pub k: usize,
    pub labels: Option<Vec<String>>,
    /// (outcome name, column).
    pub outcomes: Vec<(String, String)>,
    pub covariates: Vec<String>,
    pub factors: Vec<String>,
    pub attribute: Option<String>,
    pub hearing_order: Option<String>,
    pub dmf: Option<String>,
}

impl Schema {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let k: usize = kv
            .parse_as("k")?
            .ok_or_else(|| Error::Config("schema: missing required key `k`".into()))?;
        let labels = kv.get("labels").map(super::kv::split_list);
        let outcomes: Vec<(String, String)> = kv
            .with_prefix("outcome.")
            .map(|(n, c)| (n.to_string(), c.to_string()))
            .collect();
        for (name, col) in &outcomes {
            if name.is_empty() || col.is_empty() {
                return Err(Error::Config("schema: empty outcome mapping".into()));
            }
        }
        Ok(Self {
            case_id: kv.get("case_id").map(str::to_string),
            z: kv.require("z")?.to_string(),
            d: kv.require("d")?.to_string(),
            k,
            labels,
            outcomes,
            covariates: kv.list("covariates"),
            factors: kv.list("factors"),
            attribute: kv.get("attribute").map(str::to_string),
            hearing_order: kv.get("hearing_order").map(str::to_string),
            dmf: kv.get("dmf").map(str::to_string),
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    /// The layout `write_csv` emits for `ds`.
    pub fn canonical(ds: &Dataset) -> Self {
        Self {
            case_id: Some("case_id".into()),
            z: "z".into(),
            d: "d".into(),
            k: ds.k(),
            labels: Some(ds.scale().labels().to_vec()),
            outcomes: ds
                .outcome_names()
                .iter()
                .map(|o| (o.clone(), format!("y_{o}")))
                .collect(),
            covariates: ds.covariate_names().to_vec(),
            factors: ds.factor_names().to_vec(),
            attribute: Some("attribute".into()),
            hearing_order: Some("hearing_order".into()),
            dmf: Some("dmf".into()),
        }
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        if let Some(c) = &self.case_id {
            kv.insert("case_id", c.clone());
        }
        kv.insert("z", self.z.clone());
        kv.insert("d", self.d.clone());
        kv.insert("k", self.k.to_string());
        if let Some(l) = &self.labels {
            kv.insert("labels", l.join(","));
        }
        for (n, c) in &self.outcomes {
            kv.insert(format!("outcome.{n}"), c.clone());
        }
        if !self.covariates.is_empty() {
            kv.insert("covariates", self.covariates.join(","));
        }
        if !self.factors.is_empty() {
            kv.insert("factors", self.factors.join(","));
        }
        for (key, v) in [
            ("attribute", &self.attribute),
            ("hearing_order", &self.hearing_order),
            ("dmf", &self.dmf),
        ] {
            if let Some(v) = v {
                kv.insert(key, v.clone());
            }
        }
        kv
    }
}
