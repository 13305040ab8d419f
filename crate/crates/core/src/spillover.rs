//! Conditional randomization test for spillover from the treatment of cases
//! heard on the immediately preceding date.
//!
//! Z̃_i is the treated share among cases whose hearing order is O_i − 1.
//! Replicates redraw Z on odd-order dates only, so the even-order cases keep
//! their own assignment while their Z̃ is re-randomized; the statistic is the
//! squared least-squares coefficient of Z̃ in D ~ 1 + Z + Z̃ over even-order
//! cases.

use crate::data::{Dataset, Design};
use crate::error::{Error, Result};
use crate::models::{fit_ordinal, Link};
use crate::rng::substream;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write;

/// Hearing-date structure shared by every replicate.
struct Layout {
    /// Hearing order per case.
    order: Vec<usize>,
    /// Cases per date, indexed by order (slot 0 unused).
    count: Vec<usize>,
    /// Cases on odd dates (the ones whose treatment is redrawn).
    odd: Vec<usize>,
    /// Even-date cases with a non-empty preceding date.
    even: Vec<usize>,
}

impl Layout {
    fn new(ds: &Dataset) -> Result<Self> {
        let order = ds
            .records()
            .iter()
            .map(|c| {
                c.hearing_order
                    .map(|o| o as usize)
                    .ok_or_else(|| Error::MissingHearingOrder(c.case_id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let max = order.iter().copied().max().unwrap_or(0);
        let mut count = vec![0usize; max + 1];
        for &o in &order {
            count[o] += 1;
        }
        let odd = (0..order.len()).filter(|&i| order[i] % 2 == 1).collect();
        let even = (0..order.len())
            .filter(|&i| order[i] % 2 == 0 && count[order[i] - 1] > 0)
            .collect();
        Ok(Self { order, count, odd, even })
    }

    /// Treated share per date.
    fn shares(&self, z: &[u8]) -> Vec<f64> {
        let mut treated = vec![0usize; self.count.len()];
        for (i, &o) in self.order.iter().enumerate() {
            treated[o] += z[i] as usize;
        }
        treated
            .iter()
            .zip(&self.count)
            .map(|(&t, &c)| if c > 0 { t as f64 / c as f64 } else { f64::NAN })
            .collect()
    }
}

/// Treated share on the preceding date; `None` for cases on the first date
/// or after an empty date.
pub fn compute_ztilde(ds: &Dataset) -> Result<Vec<Option<f64>>> {
    let layout = Layout::new(ds)?;
    let shares = layout.shares(&ds.z());
    Ok(layout
        .order
        .iter()
        .map(|&o| (o > 1 && layout.count[o - 1] > 0).then(|| shares[o - 1]))
        .collect())
}

/// Squared Z̃ coefficient of the OLS fit D ~ 1 + Z + Z̃ on `cases`, by
/// partialling out the arm means. `None` when the design is collinear.
fn statistic(cases: &[usize], d: &[f64], z: &[u8], zt: &[f64]) -> Option<f64> {
    let mut n = [0usize; 2];
    let mut sd = [0.0; 2];
    let mut st = [0.0; 2];
    for &i in cases {
        let g = z[i] as usize;
        n[g] += 1;
        sd[g] += d[i];
        st[g] += zt[i];
    }
    if n[0] == 0 || n[1] == 0 {
        return None;
    }
    let md = [sd[0] / n[0] as f64, sd[1] / n[1] as f64];
    let mt = [st[0] / n[0] as f64, st[1] / n[1] as f64];
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &i in cases {
        let g = z[i] as usize;
        let r = zt[i] - mt[g];
        sxy += r * (d[i] - md[g]);
        sxx += r * r;
    }
    if sxx <= 1e-12 * cases.len() as f64 {
        return None;
    }
    let b = sxy / sxx;
    Some(b * b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrtResult {
    pub t_obs: f64,
    pub p_value: f64,
    pub s: usize,
    /// `null_draws[0]` is the observed statistic; the rest are replicates.
    pub null_draws: Vec<f64>,
    /// Replicate assignments discarded because the regression was collinear.
    pub redraws: usize,
}

impl CrtResult {
    pub fn null_csv(&self) -> String {
        let mut s = String::from("replicate,t\n");
        for (i, t) in self.null_draws.iter().enumerate() {
            let _ = writeln!(s, "{i},{t}");
        }
        s
    }
}

fn crt_with(layout: &Layout, d: &[usize], z: &[u8], s: usize, seed: u64, label: &str, index: u64) -> Result<CrtResult> {
    if s < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replicates, got {s}")));
    }
    let df: Vec<f64> = d.iter().map(|&v| v as f64).collect();
    let ztilde = |zs: &[u8]| -> Vec<f64> {
        let shares = layout.shares(zs);
        layout.order.iter().map(|&o| if o > 1 { shares[o - 1] } else { f64::NAN }).collect()
    };
    let t_obs = statistic(&layout.even, &df, z, &ztilde(z)).ok_or(Error::DegenerateRegression { attempts: 0 })?;
    let cap = 10 * s;
    let mut rng = substream(seed, label, index);
    let mut zr = z.to_vec();
    let mut null_draws = Vec::with_capacity(s);
    null_draws.push(t_obs);
    let mut redraws = 0;
    while null_draws.len() < s {
        for &i in &layout.odd {
            zr[i] = rng.random::<bool>() as u8;
        }
        assert!(layout.even.iter().all(|&i| zr[i] == z[i]), "even-order treatment changed");
        match statistic(&layout.even, &df, &zr, &ztilde(&zr)) {
            Some(t) => null_draws.push(t),
            None => {
                redraws += 1;
                if redraws > cap {
                    return Err(Error::DegenerateRegression { attempts: redraws });
                }
            }
        }
    }
    let hits = null_draws.iter().filter(|&&t| t >= t_obs).count();
    Ok(CrtResult {
        t_obs,
        p_value: hits as f64 / s as f64,
        s,
        null_draws,
        redraws,
    })
}

/// Test with `s` draws from the randomization null (the observed statistic
/// counts as one of them, so p ≥ 1/s).
pub fn crt_test(ds: &Dataset, s: usize, seed: u64) -> Result<CrtResult> {
    let layout = Layout::new(ds)?;
    crt_with(&layout, &ds.d(), &ds.z(), s, seed, "spillover.crt", 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerPoint {
    pub omega: f64,
    pub power: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCurve {
    /// Fitted ordinal-logit coefficients of (Z, Z̃) and cutpoints.
    pub fitted: Vec<f64>,
    pub cutpoints: Vec<f64>,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,power,reps\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.omega, p.power, p.reps);
        }
        s
    }
}

/// Rejection rate of the test at `level` when decisions are regenerated
/// from an ordinal logit in (Z, Z̃) fitted to `ds`, with the Z̃ coefficient
/// replaced by each ω. Sample size, dates and treatment stay as observed.
pub fn crt_power(ds: &Dataset, omega_grid: &[f64], reps: usize, s: usize, level: f64, seed: u64) -> Result<PowerCurve> {
    if omega_grid.is_empty() {
        return Err(Error::InvalidArgument("omega grid is empty".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be positive".into()));
    }
    let layout = Layout::new(ds)?;
    let z = ds.z();
    let d_obs = ds.d();
    let zt: Vec<Option<f64>> = compute_ztilde(ds)?;
    let used: Vec<usize> = (0..ds.len()).filter(|&i| zt[i].is_some()).collect();
    let rows: Vec<Vec<f64>> = used.iter().map(|&i| vec![z[i] as f64, zt[i].unwrap()]).collect();
    let design = Design::from_rows(vec!["z".into(), "ztilde".into()], &rows)?;
    let fit_d: Vec<usize> = used.iter().map(|&i| d_obs[i]).collect();
    let fit = fit_ordinal(&fit_d, &design, ds.k(), Link::Logit)?;
    let beta_z = fit.coefficients[0];

    let jobs: Vec<(usize, usize)> = (0..omega_grid.len()).flat_map(|g| (0..reps).map(move |r| (g, r))).collect();
    let rejected = jobs
        .par_iter()
        .map(|&(g, r)| {
            let omega = omega_grid[g];
            let index = (g * reps + r) as u64;
            let mut rng = substream(seed, "spillover.power", index);
            let mut d = d_obs.clone();
            for &i in &used {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                let latent = beta_z * z[i] as f64 + omega * zt[i].unwrap() + (u / (1.0 - u)).ln();
                d[i] = fit.cutpoints.iter().filter(|&&t| t < latent).count();
            }
            let res = crt_with(&layout, &d, &z, s, seed, "spillover.power.crt", index)?;
            Ok(res.p_value <= level)
        })
        .collect::<Result<Vec<bool>>>()?;
    let points = omega_grid
        .iter()
        .enumerate()
        .map(|(g, &omega)| PowerPoint {
            omega,
            power: rejected[g * reps..(g + 1) * reps].iter().filter(|&&b| b).count() as f64 / reps as f64,
            reps,
        })
        .collect();
    Ok(PowerCurve {
        fitted: fit.coefficients.clone(),
        cutpoints: fit.cutpoints.clone(),
        points,
    })
}
