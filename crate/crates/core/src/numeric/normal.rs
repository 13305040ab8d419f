//! Standard normal density, distribution and quantile functions.
//!
//! `norm_cdf` is built on `erfc`, so it keeps full relative precision in the
//! lower tail; `norm_sf` does the same for the upper tail. The quantile uses
//! Wichura's AS241 rational approximation followed by one Halley step.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x).
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x), accurate for large positive `x`.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// φ(x)/Φ(x), stable for very negative `x`.
pub fn mills_lower(x: f64) -> f64 {
    if x > -35.0 {
        let c = norm_cdf(x);
        if c > 0.0 {
            return norm_pdf(x) / c;
        }
    }
    // Asymptotic expansion of φ(x)/Φ(x) for x → −∞.
    let t = -x;
    let t2 = t * t;
    t / (1.0 - 1.0 / t2 + 3.0 / (t2 * t2))
}

/// Standard normal quantile Φ⁻¹(p). Returns ±∞ at p = 1 or 0 and NaN outside [0, 1].
pub fn norm_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = as241(p);
    if !x.is_finite() {
        return x;
    }
    // One Halley refinement against the erfc-based CDF.
    let e = if x < 0.0 {
        norm_cdf(x) - p
    } else {
        (1.0 - p) - norm_sf(x)
    };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    let refined = x - u / (1.0 + 0.5 * x * u);
    if refined.is_finite() {
        refined
    } else {
        x
    }
}

fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Logistic CDF.
#[inline]
pub fn logistic_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logistic_pdf(x: f64) -> f64 {
    let f = logistic_cdf(x);
    f * (1.0 - f)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 50-digit arithmetic.
    const CDF_TABLE: &[(f64, f64)] = &[
        (0.0, 0.5),
        (0.5, 0.691_462_461_274_013_1),
        (1.0, 0.841_344_746_068_542_9),
        (-1.0, 0.158_655_253_931_457_05),
        (2.0, 0.977_249_868_051_820_8),
        (-3.0, 1.349_898_031_630_094_5e-3),
        (-5.0, 2.866_515_718_791_939e-7),
        (-10.0, 7.619_853_024_160_527e-24),
    ];

    #[test]
    fn cdf_matches_reference_values() {
        for &(x, want) in CDF_TABLE {
            let got = norm_cdf(x);
            assert!((got - want).abs() < 1e-15, "x={x}: {got} vs {want}");
            if want < 1e-3 {
                assert!(((got - want) / want).abs() < 1e-12);
            }
            assert!((norm_sf(-x) - got).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() < 1e-15, "p={p}");
        }
        for e in 2..300 {
            let p = 10f64.powi(-e);
            let x = norm_quantile(p);
            let rel = (norm_cdf(x) - p).abs() / p;
            assert!(rel < 1e-12, "p=1e-{e}: rel {rel}");
        }
        assert_eq!(norm_quantile(0.5), 0.0);
        assert_eq!(norm_quantile(0.0), f64::NEG_INFINITY);
        assert!(norm_quantile(1.5).is_nan());
    }

    #[test]
    fn mills_ratio_continuous_across_branch() {
        let a = mills_lower(-34.999);
        let b = mills_lower(-35.001);
        assert!((a - b).abs() / a < 1e-4);
        assert!((mills_lower(0.0) - 2.0 * norm_pdf(0.0)).abs() < 1e-15);
    }

    #[test]
    fn logistic_is_symmetric() {
        for &x in &[-40.0, -3.0, 0.0, 0.7, 25.0] {
            assert!((logistic_cdf(x) + logistic_cdf(-x) - 1.0).abs() < 1e-15);
        }
    }
}
