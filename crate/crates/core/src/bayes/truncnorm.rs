//! Univariate and bivariate truncated normal draws.
//!
//! Univariate draws use inverse-CDF sampling on the side of the mode that
//! keeps precision, and switch to rejection from a translated exponential
//! (or a uniform envelope for narrow intervals) once the interval lies more
//! than five standard deviations into a tail.

use crate::error::{Error, Result};
use crate::numeric::normal::{norm_cdf, norm_quantile, norm_sf};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

const TAIL: f64 = 5.0;

/// Standard normal restricted to (a, b) with a ≥ TAIL.
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b - a <= 1.0 / a {
        // Uniform envelope: acceptance ≥ exp(−(b² − a²)/2) ≥ e^{−1.02}.
        loop {
            let x = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() <= (0.5 * (a * a - x * x)).exp() {
                return x;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = a + e / lambda;
        if x > b {
            continue;
        }
        let t = x - lambda;
        if rng.random::<f64>() <= (-0.5 * t * t).exp() {
            return x;
        }
    }
}

/// Standard normal restricted to (a, b).
fn standard<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= TAIL {
        return upper_tail(a, b, rng);
    }
    if b <= -TAIL {
        return -upper_tail(-b, -a, rng);
    }
    let u: f64 = rng.random();
    let x = if a > 0.0 {
        let (sa, sb) = (norm_sf(a), norm_sf(b));
        -norm_quantile(sb + u * (sa - sb))
    } else {
        let (fa, fb) = (norm_cdf(a), norm_cdf(b));
        norm_quantile(fa + u * (fb - fa))
    };
    x.clamp(a, b)
}

/// Draw from N(mu, sd²) restricted to (lo, hi]. Infinite limits are allowed.
pub fn draw_truncated_normal<R: Rng + ?Sized>(mu: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::EmptyInterval { lo, hi });
    }
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    Ok((mu + sd * standard(a, b, rng)).clamp(lo, hi))
}

/// Mean of N(mu, sd²) restricted to (lo, hi), used to place initial latents
/// strictly inside their boxes.
pub fn truncated_mean(mu: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let pa = crate::numeric::norm_pdf(a);
    let pb = crate::numeric::norm_pdf(b);
    let z = if a > 0.0 { norm_sf(a) - norm_sf(b) } else { norm_cdf(b) - norm_cdf(a) };
    let m = if z > 1e-300 {
        mu + sd * (pa - pb) / z
    } else if a.is_finite() && b.is_finite() {
        0.5 * (lo + hi)
    } else if a.is_finite() {
        lo + sd / a.abs().max(1.0)
    } else {
        hi - sd / b.abs().max(1.0)
    };
    if m > lo && m < hi {
        m
    } else if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else if lo.is_finite() {
        lo + sd.min(1.0) * 1e-3
    } else {
        hi - sd.min(1.0) * 1e-3
    }
}

/// Latent box (lo, hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

/// One update of a unit-variance bivariate normal pair with correlation
/// `rho` truncated to `box_d × box_y`, by `sweeps` systematic scans of the two
/// full conditionals starting from `init`. With `rho = 0` the components are
/// drawn independently and `init` is ignored.
#[allow(clippy::too_many_arguments)]
pub fn draw_truncated_bivariate<R: Rng + ?Sized>(
    mean_d: f64,
    mean_y: f64,
    rho: f64,
    box_d: Interval,
    box_y: Interval,
    init: (f64, f64),
    sweeps: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if rho == 0.0 {
        let d = draw_truncated_normal(mean_d, 1.0, box_d.lo, box_d.hi, rng)?;
        let y = draw_truncated_normal(mean_y, 1.0, box_y.lo, box_y.hi, rng)?;
        return Ok((d, y));
    }
    let s = (1.0 - rho * rho).sqrt();
    let (mut d, mut y) = init;
    for _ in 0..sweeps.max(1) {
        d = draw_truncated_normal(mean_d + rho * (y - mean_y), s, box_d.lo, box_d.hi, rng)?;
        y = draw_truncated_normal(mean_y + rho * (d - mean_d), s, box_y.lo, box_y.hi, rng)?;
    }
    Ok((d, y))
}
