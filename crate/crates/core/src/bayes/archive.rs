//! Draw archive: `chain_<c>.csv` (iteration plus one column per parameter)
//! and `manifest.json` holding the configuration and R̂ table.

use super::{GibbsConfig, PosteriorDraws};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    outcome: String,
    covariate_names: Vec<String>,
    names: Vec<String>,
    p: usize,
    k: usize,
    rho: f64,
    config: GibbsConfig,
    per_chain: usize,
    rhat: Vec<(String, f64)>,
    warnings: Vec<String>,
}

pub fn write_draws(draws: &PosteriorDraws, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let per = draws.per_chain();
    let first = draws.config.iterations - per;
    for c in 0..draws.chains.len() {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join(format!("chain_{c}.csv")))?);
        writeln!(f, "iteration,{}", draws.names.join(","))?;
        for t in 0..per {
            let row: Vec<String> = draws.draw(c, t).iter().map(|v| v.to_string()).collect();
            writeln!(f, "{},{}", first + t, row.join(","))?;
        }
        f.flush()?;
    }
    let m = Manifest {
        outcome: draws.outcome.clone(),
        covariate_names: draws.covariate_names.clone(),
        names: draws.names.clone(),
        p: draws.p,
        k: draws.k,
        rho: draws.rho,
        config: draws.config.clone(),
        per_chain: per,
        rhat: draws.rhat(),
        warnings: draws.warnings.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

pub fn read_draws(dir: &Path) -> Result<PosteriorDraws> {
    let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let dim = m.names.len();
    let mut chains = Vec::with_capacity(m.config.chains);
    for c in 0..m.config.chains {
        let mut rdr = csv::Reader::from_path(dir.join(format!("chain_{c}.csv")))?;
        let mut flat = Vec::with_capacity(m.per_chain * dim);
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::DimensionMismatch(format!("chain {c}: expected {} columns", dim + 1)));
            }
            for v in rec.iter().skip(1) {
                flat.push(v.parse::<f64>().map_err(|e| Error::Config(format!("chain {c}: {e}")))?);
            }
        }
        if flat.len() != m.per_chain * dim {
            return Err(Error::DimensionMismatch(format!("chain {c}: draw count differs from manifest")));
        }
        chains.push(flat);
    }
    Ok(PosteriorDraws {
        outcome: m.outcome,
        covariate_names: m.covariate_names,
        names: m.names,
        p: m.p,
        k: m.k,
        rho: m.rho,
        config: m.config,
        chains,
        warnings: m.warnings,
    })
}
