//! Design-matrix encoding: numeric columns, treatment-coded factors and
//! pairwise interactions.
//!
//! Recipe file keys:
//!
//! ```text
//! numeric = age, priors
//! factor.charge = misdemeanor, felony_low, felony_high   # first level is the reference
//! interaction = age:charge, priors:age
//! ```

use super::kv::{split_list, KeyValues};
use super::Dataset;
use crate::error::{Error, Result};
use crate::numeric::linalg::Mat;
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recipe {
    pub numeric: Vec<String>,
    /// Factor name and declared levels; the first level is dropped.
    pub factors: Vec<(String, Vec<String>)>,
    pub interactions: Vec<(String, String)>,
}

impl Recipe {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let factors = kv
            .with_prefix("factor.")
            .map(|(name, levels)| {
                let levels = split_list(levels);
                if levels.is_empty() {
                    Err(Error::Config(format!("factor `{name}` declares no levels")))
                } else {
                    Ok((name.to_string(), levels))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let interactions = kv
            .list("interaction")
            .into_iter()
            .map(|t| {
                t.split_once(':')
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| Error::Config(format!("interaction `{t}` must be `a:b`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            numeric: kv.list("numeric"),
            factors,
            interactions,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    /// All numeric covariates plus every factor with its observed levels in
    /// sorted order.
    pub fn default_for(ds: &Dataset) -> Self {
        let factors = ds
            .factor_names()
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let levels: BTreeSet<&str> = ds.records().iter().map(|r| r.factors[j].as_str()).collect();
                (name.clone(), levels.into_iter().map(str::to_string).collect())
            })
            .collect();
        Self {
            numeric: ds.covariate_names().to_vec(),
            factors,
            interactions: Vec::new(),
        }
    }
}

/// Row-major `n × p` design with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(names: Vec<String>, n: usize, data: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if data.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "design data has {} entries, expected {n}×{p}",
                data.len()
            )));
        }
        Ok(Self { names, n, p, data })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged design rows".into()));
        }
        Self::new(names, rows.len(), rows.concat())
    }

    /// Zero-column design for `n` cases.
    pub fn empty(n: usize) -> Self {
        Self {
            names: vec![],
            n,
            p: 0,
            data: vec![],
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn to_matrix(&self) -> Mat {
        Mat::from_row_slice(self.n, self.p, &self.data)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            names: self.names.clone(),
            n: idx.len(),
            p: self.p,
            data,
        }
    }

    /// Columns whose values never change (would be collinear with a cutpoint).
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.p)
            .filter(|&j| {
                self.n == 0 || (0..self.n).all(|i| self.data[i * self.p + j] == self.data[j])
            })
            .collect()
    }
}

enum Term<'a> {
    Numeric(usize),
    Factor(usize, &'a [String]),
}

fn term_columns(ds: &Dataset, term: &Term, i: usize) -> Result<Vec<f64>> {
    let r = &ds.records()[i];
    Ok(match term {
        Term::Numeric(j) => vec![r.covariates[*j]],
        Term::Factor(j, levels) => {
            let v = &r.factors[*j];
            let pos = levels.iter().position(|l| l == v).ok_or_else(|| Error::UnknownLevel {
                factor: ds.factor_names()[*j].clone(),
                level: v.clone(),
            })?;
            (1..levels.len()).map(|l| (l == pos) as u8 as f64).collect()
        }
    })
}

fn term_names(name: &str, term: &Term) -> Vec<String> {
    match term {
        Term::Numeric(_) => vec![name.to_string()],
        Term::Factor(_, levels) => levels[1..].iter().map(|l| format!("{name}[{l}]")).collect(),
    }
}

/// Encode the covariates of `ds` according to `recipe`. Column order is
/// numeric terms, then factor dummies, then interactions, each in recipe order.
pub fn encode_design(ds: &Dataset, recipe: &Recipe) -> Result<Design> {
    let resolve = |name: &str| -> Result<Term> {
        if let Some((_, levels)) = recipe.factors.iter().find(|(f, _)| f == name) {
            let j = ds
                .factor_names()
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::MissingColumn { column: name.to_string() })?;
            return Ok(Term::Factor(j, levels));
        }
        ds.covariate_names()
            .iter()
            .position(|c| c == name)
            .map(Term::Numeric)
            .ok_or_else(|| Error::MissingColumn { column: name.to_string() })
    };
    let mut terms: Vec<(String, Term)> = Vec::new();
    for name in &recipe.numeric {
        match resolve(name)? {
            t @ Term::Numeric(_) => terms.push((name.clone(), t)),
            Term::Factor(..) => {
                return Err(Error::Config(format!("`{name}` is declared both numeric and factor")))
            }
        }
    }
    for (name, _) in &recipe.factors {
        terms.push((name.clone(), resolve(name)?));
    }
    let inter: Vec<(String, Term, String, Term)> = recipe
        .interactions
        .iter()
        .map(|(a, b)| Ok((a.clone(), resolve(a)?, b.clone(), resolve(b)?)))
        .collect::<Result<_>>()?;

    let mut names = Vec::new();
    for (n, t) in &terms {
        names.extend(term_names(n, t));
    }
    for (an, at, bn, bt) in &inter {
        for a in term_names(an, at) {
            for b in term_names(bn, bt) {
                names.push(format!("{a}:{b}"));
            }
        }
    }
    let n = ds.len();
    let mut data = Vec::with_capacity(n * names.len());
    for i in 0..n {
        for (_, t) in &terms {
            data.extend(term_columns(ds, t, i)?);
        }
        for (_, at, _, bt) in &inter {
            let a = term_columns(ds, at, i)?;
            let b = term_columns(ds, bt, i)?;
            for va in &a {
                for vb in &b {
                    data.push(va * vb);
                }
            }
        }
    }
    Design::new(names, n, data)
}
