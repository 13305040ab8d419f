//! CSV ingestion and emission.

use super::{CaseRecord, DecisionScale, Dataset, Schema};
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::path::Path;

fn column(headers: &HashMap<String, usize>, name: &str) -> Result<usize> {
    headers.get(name).copied().ok_or_else(|| Error::MissingColumn {
        column: name.to_string(),
    })
}

fn domain(row: usize, column: &str, value: &str, expected: &str) -> Error {
    Error::ValueOutOfDomain {
        row,
        column: column.to_string(),
        value: value.to_string(),
        expected: expected.to_string(),
    }
}

fn binary(row: usize, col: &str, v: &str) -> Result<u8> {
    match v.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(domain(row, col, v, "0 or 1")),
    }
}

/// Read a dataset from CSV according to an explicit schema. Row numbers in
/// errors count data rows from 1.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    read_records(&mut rdr, schema)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    read_records(&mut rdr, schema)
}

fn read_records<R: std::io::Read>(rdr: &mut csv::Reader<R>, schema: &Schema) -> Result<Dataset> {
    let headers: HashMap<String, usize> = rdr
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let k = schema.k;
    let labels = schema
        .labels
        .clone()
        .unwrap_or_else(|| (0..=k).map(|d| d.to_string()).collect());
    let scale = DecisionScale::new(k, labels)?;

    let id_col = schema.case_id.as_deref().map(|c| column(&headers, c)).transpose()?;
    let z_col = column(&headers, &schema.z)?;
    let d_col = column(&headers, &schema.d)?;
    let y_cols = schema
        .outcomes
        .iter()
        .map(|(_, c)| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let f_cols = schema
        .factors
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let a_col = schema.attribute.as_deref().map(|c| column(&headers, c)).transpose()?;
    let o_col = schema.hearing_order.as_deref().map(|c| column(&headers, c)).transpose()?;
    let m_col = schema.dmf.as_deref().map(|c| column(&headers, c)).transpose()?;

    let mut records = Vec::new();
    let mut ids = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let get = |c: usize, name: &str| -> Result<&str> {
            let v = rec.get(c).unwrap_or("").trim();
            if v.is_empty() {
                Err(domain(row, name, v, "non-missing value"))
            } else {
                Ok(v)
            }
        };
        let case_id = match (id_col, &schema.case_id) {
            (Some(c), Some(n)) => get(c, n)?.to_string(),
            _ => row.to_string(),
        };
        if ids.insert(case_id.clone(), row).is_some() {
            return Err(Error::DuplicateCaseId(case_id));
        }
        let z = binary(row, &schema.z, get(z_col, &schema.z)?)?;
        let dv = get(d_col, &schema.d)?;
        let d: usize = dv
            .parse()
            .ok()
            .filter(|&d: &usize| d <= k)
            .ok_or_else(|| domain(row, &schema.d, dv, &format!("integer in 0..={k}")))?;
        let outcomes = schema
            .outcomes
            .iter()
            .zip(&y_cols)
            .map(|((_, name), &c)| binary(row, name, get(c, name)?))
            .collect::<Result<Vec<_>>>()?;
        let covariates = schema
            .covariates
            .iter()
            .zip(&x_cols)
            .map(|(name, &c)| {
                let v = get(c, name)?;
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| domain(row, name, v, "finite real number"))
            })
            .collect::<Result<Vec<_>>>()?;
        let factors = schema
            .factors
            .iter()
            .zip(&f_cols)
            .map(|(name, &c)| get(c, name).map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        let attribute = match (a_col, &schema.attribute) {
            (Some(c), Some(n)) => get(c, n)?.to_string(),
            _ => String::new(),
        };
        let hearing_order = match (o_col, &schema.hearing_order) {
            (Some(c), Some(n)) => {
                let v = rec.get(c).unwrap_or("").trim();
                if v.is_empty() {
                    None
                } else {
                    Some(
                        v.parse::<u32>()
                            .ok()
                            .filter(|&o| o >= 1)
                            .ok_or_else(|| domain(row, n, v, "positive integer"))?,
                    )
                }
            }
            _ => None,
        };
        let dmf = match (m_col, &schema.dmf) {
            (Some(c), Some(n)) => {
                let v = rec.get(c).unwrap_or("").trim();
                if v.is_empty() {
                    None
                } else {
                    Some(binary(row, n, v)?)
                }
            }
            _ => None,
        };
        records.push(CaseRecord {
            case_id,
            z,
            d,
            outcomes,
            covariates,
            factors,
            attribute,
            hearing_order,
            dmf,
        });
    }
    Dataset::new(
        records,
        scale,
        schema.outcomes.iter().map(|(n, _)| n.clone()).collect(),
        schema.covariates.clone(),
        schema.factors.clone(),
    )
}

/// Write `ds` in the canonical layout and return the matching schema.
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<Schema> {
    let file = std::fs::File::create(path)?;
    write_to(ds, file)
}

pub fn write_to<W: std::io::Write>(ds: &Dataset, w: W) -> Result<Schema> {
    let schema = Schema::canonical(ds);
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["case_id".to_string(), "z".into(), "d".into()];
    header.extend(schema.outcomes.iter().map(|(_, c)| c.clone()));
    header.extend(schema.covariates.iter().cloned());
    header.extend(schema.factors.iter().cloned());
    header.extend(["attribute".into(), "hearing_order".into(), "dmf".into()]);
    wtr.write_record(&header)?;
    for r in ds.records() {
        let mut row = vec![r.case_id.clone(), r.z.to_string(), r.d.to_string()];
        row.extend(r.outcomes.iter().map(|y| y.to_string()));
        row.extend(r.covariates.iter().map(|x| x.to_string()));
        row.extend(r.factors.iter().cloned());
        row.push(r.attribute.clone());
        row.push(r.hearing_order.map(|o| o.to_string()).unwrap_or_default());
        row.push(r.dmf.map(|o| o.to_string()).unwrap_or_default());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(schema)
}
