//! Bivariate standard normal probabilities.
//!
//! Upper-orthant probabilities follow Genz's adaptation of the
//! Drezner–Wesolowsky method: Gauss–Legendre quadrature of the Plackett
//! integral for |r| < 0.925 and an asymptotic expansion with a corrective
//! quadrature near |r| = 1. Absolute error is below 1e-14 in double precision.

use super::normal::norm_cdf;
use std::f64::consts::PI;

const GL6_W: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL6_X: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197];
const GL12_W: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL12_X: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475,
    0.769_902_674_194_305,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];
const GL20_W: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const GL20_X: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_325_9,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

/// Pr(X > h, Y > k) for standard bivariate normal with correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { norm_cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return norm_cdf(-h);
    }
    if r == 0.0 {
        return norm_cdf(-h) * norm_cdf(-k);
    }
    let tp = 2.0 * PI;
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    // Nodes on [0, 2]: 1 - x and 1 + x, each with weight w.
    let nodes = || {
        w.iter()
            .zip(x)
            .flat_map(|(&wi, &xi)| [(wi, 1.0 - xi), (wi, 1.0 + xi)])
    };
    let h = h;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        for (wi, xi) in nodes() {
            let sn = (asr * xi).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn = bvn * asr / tp + norm_cdf(-h) * norm_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = 1.0 - r * r;
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -(bs / as_ + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = tp.sqrt() * norm_cdf(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            let mut acc = 0.0;
            for (wi, xi) in nodes() {
                let xs = (a * xi) * (a * xi);
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                    acc += wi * asr.exp() * (sp - ep);
                }
            }
            bvn = (a * acc - bvn) / tp;
        }
        if r > 0.0 {
            bvn += norm_cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                norm_cdf(k) - norm_cdf(h)
            } else {
                norm_cdf(-h) - norm_cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Pr(X ≤ h, Y ≤ k).
#[inline]
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r)
}

/// Pr(a1 < X ≤ b1, a2 < Y ≤ b2). Infinite limits are allowed.
pub fn bvn_rectangle(a1: f64, b1: f64, a2: f64, b2: f64, r: f64) -> f64 {
    if a1 >= b1 || a2 >= b2 {
        return 0.0;
    }
    if r == 0.0 {
        return (norm_cdf(b1) - norm_cdf(a1)) * (norm_cdf(b2) - norm_cdf(a2));
    }
    let f = |x: f64, y: f64| -> f64 {
        if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
            0.0
        } else if x == f64::INFINITY {
            norm_cdf(y)
        } else if y == f64::INFINITY {
            norm_cdf(x)
        } else {
            bvn_cdf(x, y, r)
        }
    };
    f(b1, b2) - f(a1, b2) - f(b1, a2) + f(a1, a2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal::norm_pdf;

    /// ∫ φ(x) Φ((k − r x)/√(1−r²)) dx over x ≤ h, by composite Simpson on a
    /// truncated range. Independent of the Genz quadrature.
    fn cdf_by_integration(h: f64, k: f64, r: f64) -> f64 {
        let lo = -9.0f64;
        let hi = h.min(9.0);
        if hi <= lo {
            return 0.0;
        }
        let n = 20_000;
        let step = (hi - lo) / n as f64;
        let s = (1.0 - r * r).sqrt();
        let g = |x: f64| norm_pdf(x) * norm_cdf((k - r * x) / s);
        let mut acc = g(lo) + g(hi);
        for i in 1..n {
            let x = lo + i as f64 * step;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
        }
        acc * step / 3.0
    }

    #[test]
    fn origin_matches_arcsine_formula() {
        for &r in &[-0.99, -0.8, -0.5, -0.1, 0.2, 0.6, 0.9, 0.95, 0.999] {
            let want = 0.25 + (r as f64).asin() / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, r) - want).abs() < 1e-14, "r={r}");
        }
    }

    #[test]
    fn matches_one_dimensional_integral() {
        let hs = [-2.5, -1.0, -0.3, 0.0, 0.4, 1.3, 2.7];
        let rs = [-0.97, -0.7, -0.4, -0.05, 0.1, 0.5, 0.8, 0.93, 0.99];
        for &h in &hs {
            for &k in &hs {
                for &r in &rs {
                    let got = bvn_cdf(h, k, r);
                    let want = cdf_by_integration(h, k, r);
                    assert!((got - want).abs() < 1e-10, "h={h} k={k} r={r}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn zero_correlation_is_product() {
        for &(h, k) in &[(-1.0, 2.0), (0.3, 0.3), (1.5, -0.7)] {
            assert!((bvn_cdf(h, k, 0.0) - norm_cdf(h) * norm_cdf(k)).abs() < 1e-16);
            // tiny r is continuous with the product
            assert!((bvn_cdf(h, k, 1e-12) - norm_cdf(h) * norm_cdf(k)).abs() < 1e-11);
        }
    }

    #[test]
    fn rectangle_partition_sums_to_one() {
        let cuts_x = [f64::NEG_INFINITY, -0.4, 0.7, f64::INFINITY];
        let cuts_y = [f64::NEG_INFINITY, -1.2, 0.0, 0.0, 1.1, f64::INFINITY];
        for &r in &[-0.6, 0.0, 0.3, 0.95] {
            let mut total = 0.0;
            for a in cuts_x.windows(2) {
                for b in cuts_y.windows(2) {
                    let p = bvn_rectangle(a[0], a[1], b[0], b[1], r);
                    assert!(p >= -1e-12);
                    total += p;
                }
            }
            assert!((total - 1.0).abs() < 1e-12, "r={r}: {total}");
        }
    }

    #[test]
    fn perfect_correlation_limits() {
        assert!((bvn_cdf(0.5, 1.0, 1.0) - norm_cdf(0.5)).abs() < 1e-15);
        assert!((bvn_cdf(0.5, 1.0, -1.0) - (norm_cdf(0.5) - norm_cdf(-1.0))).abs() < 1e-15);
    }
}
