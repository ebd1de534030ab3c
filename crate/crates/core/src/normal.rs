//! Standard normal distribution functions and the error function family.
//!
//! `erf`/`erfc` follow the FreeBSD `s_erf.c` rational approximations (Sun
//! Microsystems, 1993; freely redistributable with this notice). The normal
//! quantile uses Wichura's AS 241 (PPND16). `erf_inv` is computed separately
//! by Halley iteration on `erf`/`erfc`, so the identity
//! `erf_inv(2v - 1) = norm_quantile(v) / sqrt(2)` relates two independent
//! code paths.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Smallest probability handed to the quantile function by the clamping policy.
pub const QUANTILE_FLOOR: f64 = 1e-9;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

// erf/erfc coefficients.
const ERX: f64 = 8.45062911510467529297e-01;
const EFX: f64 = 1.28379167095512586316e-01;
const EFX8: f64 = 1.02703333676410069053e+00;
const PP: [f64; 5] = [
    1.28379167095512558561e-01,
    -3.25042107247001499370e-01,
    -2.84817495755985104766e-02,
    -5.77027029648944159157e-03,
    -2.37630166566501626084e-05,
];
const QQ: [f64; 5] = [
    3.97917223959155352819e-01,
    6.50222499887672944485e-02,
    5.08130628187576562776e-03,
    1.32494738004321644526e-04,
    -3.96022827877536812320e-06,
];
const PA: [f64; 7] = [
    -2.36211856075265944077e-03,
    4.14856118683748331666e-01,
    -3.72207876035701323847e-01,
    3.18346619901161753674e-01,
    -1.10894694282396677476e-01,
    3.54783043256182359371e-02,
    -2.16637559486879084300e-03,
];
const QA: [f64; 6] = [
    1.06420880400844228286e-01,
    5.40397917702171048937e-01,
    7.18286544141962662868e-02,
    1.26171219808761642112e-01,
    1.36370839120290507362e-02,
    1.19844998467991074170e-02,
];
const RA: [f64; 8] = [
    -9.86494403484714822705e-03,
    -6.93858572707181764372e-01,
    -1.05586262253232909814e+01,
    -6.23753324503260060396e+01,
    -1.62396669462573470355e+02,
    -1.84605092906711035994e+02,
    -8.12874355063065934246e+01,
    -9.81432934416914548592e+00,
];
const SA: [f64; 8] = [
    1.96512716674392571292e+01,
    1.37657754143519042600e+02,
    4.34565877475229228821e+02,
    6.45387271733267880336e+02,
    4.29008140027567833386e+02,
    1.08635005541779435134e+02,
    6.57024977031928170135e+00,
    -6.04244152148580987438e-02,
];
const RB: [f64; 7] = [
    -9.86494292470009928597e-03,
    -7.99283237680523006574e-01,
    -1.77579549177547519889e+01,
    -1.60636384855821916062e+02,
    -6.37566443368389627722e+02,
    -1.02509513161107724954e+03,
    -4.83519191608651397019e+02,
];
const SB: [f64; 7] = [
    3.03380607434824582924e+01,
    3.25792512996573918826e+02,
    1.53672958608443695994e+03,
    3.19985821950859553908e+03,
    2.55305040643316442583e+03,
    4.74528541206955367215e+02,
    -2.24409524465858183362e+01,
];

/// Evaluates `c[0] + x*c[1] + x^2*c[2] + ...`.
#[inline]
fn horner(x: f64, c: &[f64]) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

#[inline]
fn small_ratio(z: f64) -> f64 {
    let r = horner(z, &PP);
    let s = 1.0 + z * horner(z, &QQ);
    r / s
}

#[inline]
fn near_one_ratio(s: f64) -> f64 {
    let p = horner(s, &PA);
    let q = 1.0 + s * horner(s, &QA);
    p / q
}

/// `erfc(x)` for `1.25 <= x < 28` via the asymptotic rational form.
#[inline]
fn erfc_tail(x: f64) -> f64 {
    let s = 1.0 / (x * x);
    let (r, q) = if x < 1.0 / 0.35 {
        (horner(s, &RA), 1.0 + s * horner(s, &SA))
    } else {
        (horner(s, &RB), 1.0 + s * horner(s, &SB))
    };
    // Split x so that -x*x is evaluated without cancellation.
    let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp() / x
}

/// The error function.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let value = if ax < 0.84375 {
        if ax < 3.725_290_298_461_914e-9 {
            if ax < 2.848_094_538_889_218e-306 {
                0.125 * (8.0 * ax + EFX8 * ax)
            } else {
                ax + EFX * ax
            }
        } else {
            ax + ax * small_ratio(ax * ax)
        }
    } else if ax < 1.25 {
        ERX + near_one_ratio(ax - 1.0)
    } else if ax >= 6.0 {
        1.0
    } else {
        1.0 - erfc_tail(ax)
    };
    value.copysign(x)
}

/// The complementary error function `1 - erf(x)`, accurate in the upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let neg = x < 0.0;
    let ax = x.abs();
    if ax < 0.84375 {
        let t = if ax < 1.387_778_780_781_445_7e-17 {
            ax
        } else {
            let y = small_ratio(ax * ax);
            if ax < 0.25 {
                ax + ax * y
            } else {
                0.5 + (ax * y + (ax - 0.5))
            }
        };
        return if neg { 1.0 + t } else { 1.0 - t };
    }
    if ax < 1.25 {
        let pq = near_one_ratio(ax - 1.0);
        return if neg { 1.0 + ERX + pq } else { 1.0 - ERX - pq };
    }
    if ax < 28.0 {
        if neg && ax > 6.0 {
            return 2.0;
        }
        let r = erfc_tail(ax);
        return if neg { 2.0 - r } else { r };
    }
    if neg {
        2.0
    } else {
        0.0
    }
}

/// Inverse error function on `(-1, 1)`; returns `±inf` at `±1` and NaN outside.
pub fn erf_inv(y: f64) -> f64 {
    if y.is_nan() || y.abs() > 1.0 {
        return f64::NAN;
    }
    if y == 1.0 {
        return f64::INFINITY;
    }
    if y == -1.0 {
        return f64::NEG_INFINITY;
    }
    if y == 0.0 {
        return 0.0;
    }
    let sign = y.signum();
    let ay = y.abs();
    // Winitzki's closed-form approximation as a starting point.
    let a = 0.147;
    let ln = (1.0 - ay * ay).ln();
    let t = 2.0 / (PI * a) + ln / 2.0;
    let mut x = ((t * t - ln / a).sqrt() - t).sqrt();
    // Halley iterations; in the upper range work against erfc to keep the
    // residual meaningful.
    let tail = 1.0 - ay;
    for _ in 0..60 {
        let deriv = FRAC_2_SQRT_PI * (-x * x).exp();
        if deriv == 0.0 {
            break;
        }
        let f = if ay > 0.5 {
            tail - erfc(x)
        } else {
            erf(x) - ay
        };
        // erf'' = -2x erf'
        let step = f / (deriv + x * f);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1e-300) {
            break;
        }
    }
    sign * x
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF. Infinite arguments map to 0 or 1.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal CDF rejecting non-finite input.
pub fn norm_cdf_checked(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("norm_cdf of non-finite value {x}")));
    }
    Ok(norm_cdf(x))
}

/// `Φ(hi) - Φ(lo)` for `lo <= hi`, using whichever tail keeps precision.
#[inline]
pub fn interval_prob(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else {
        norm_cdf(hi) - norm_cdf(lo)
    }
}

// AS 241 coefficients.
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_545_925e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// AS 241 for `p` strictly inside `(0, 1)`.
fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(r, &A) / horner(r, &B);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        horner(r, &C) / horner(r, &D)
    } else {
        let r = r - 5.0;
        horner(r, &E) / horner(r, &F)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Standard normal quantile `Φ⁻¹(v)` for `v ∈ (0, 1)`.
pub fn norm_quantile(v: f64) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile requires a probability in (0, 1), got {v}"
        )));
    }
    Ok(ppnd16(v))
}

/// A value computed after clamping its probability argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    /// Set when the argument lay outside `[QUANTILE_FLOOR, 1 - QUANTILE_FLOOR]`.
    pub saturated: bool,
}

/// `Φ⁻¹(v)` with `v` clamped into `[1e-9, 1 - 1e-9]`.
///
/// Probabilities outside `[0, 1]` (or NaN) are still a domain error.
pub fn norm_quantile_clamped(v: f64) -> Result<Clamped> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(format!(
            "probability {v} lies outside [0, 1]"
        )));
    }
    let c = v.clamp(QUANTILE_FLOOR, 1.0 - QUANTILE_FLOOR);
    Ok(Clamped {
        value: ppnd16(c),
        saturated: c != v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    /// Maclaurin series of erf, summed until terms vanish. Adequate for |x| <= 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let contrib = term / (2.0 * n + 1.0);
            sum += contrib;
            if contrib.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        FRAC_2_SQRT_PI * sum
    }

    #[test]
    fn cdf_matches_series_oracle() {
        // Φ(1) from the series oracle: 0.841344746068543
        let oracle = 0.5 * (1.0 + erf_series(1.0 / SQRT_2));
        assert!((oracle - 0.841_344_746_068_543).abs() < 1e-14);
        assert!((norm_cdf(1.0) - oracle).abs() < 1e-14);
        assert!((norm_cdf(-1.0) - (1.0 - oracle)).abs() < 1e-14);
        assert_eq!(norm_cdf(0.0), 0.5);
        for i in -300..=300 {
            let x = i as f64 / 100.0;
            let o = 0.5 * (1.0 + erf_series(x / SQRT_2));
            assert!((norm_cdf(x) - o).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn erf_agrees_with_statrs() {
        // statrs is only good to about 1e-10 here, so this is a coarse cross-check.
        for i in -600..=600 {
            let x = i as f64 / 100.0;
            let r = statrs::function::erf::erf(x);
            assert!((erf(x) - r).abs() < 1e-10, "x={x}");
            let rc = statrs::function::erf::erfc(x);
            assert!((erfc(x) - rc).abs() <= 1e-9 * rc, "x={x}");
        }
    }

    #[test]
    fn erf_reference_values() {
        // 30-digit reference values.
        let erf_ref = [
            (0.3, 0.328_626_759_459_127_43),
            (-3.07, -0.999_985_857_407_116_68),
            (2.82, 0.999_933_390_427_259_89),
        ];
        for (x, want) in erf_ref {
            assert!((erf(x) - want).abs() < 2e-16, "erf({x})");
        }
        let erfc_ref = [
            (5.0, 1.537_459_794_428_034_9e-12),
            (10.0, 2.088_487_583_762_544_8e-45),
            (-1.5, 1.966_105_146_475_310_7),
            (27.0, 5.237_048_923_789_255_7e-319),
        ];
        for (x, want) in erfc_ref {
            let rel = if want > 1e-300 { 1e-14 } else { 1e-3 };
            assert!((erfc(x) - want).abs() <= rel * want, "erfc({x})");
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(norm_quantile(0.5).unwrap(), 0.0);
        let x = norm_quantile(0.841_344_746_068_543).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
        // Φ⁻¹(0.999) = 3.090232306167813
        let x = norm_quantile(0.999).unwrap();
        assert!((x - 3.090_232_306_167_813).abs() < 1e-12);
        assert!((norm_cdf(x) - 0.999).abs() < 1e-15);
    }

    #[test]
    fn quantile_rejects_boundary() {
        assert!(norm_quantile(0.0).is_err());
        assert!(norm_quantile(1.0).is_err());
        assert!(norm_quantile(f64::NAN).is_err());
        assert!(norm_cdf_checked(f64::INFINITY).is_err());
    }

    #[test]
    fn clamped_quantile_flags_saturation() {
        let c = norm_quantile_clamped(0.0).unwrap();
        assert!(c.saturated);
        assert!((c.value - ppnd16(QUANTILE_FLOOR)).abs() < 1e-15);
        let c = norm_quantile_clamped(0.3).unwrap();
        assert!(!c.saturated);
        assert!(norm_quantile_clamped(1.5).is_err());
    }

    #[test]
    fn round_trips_on_dense_grid() {
        for i in 1..10_000 {
            let v = i as f64 / 10_000.0;
            let x = norm_quantile(v).unwrap();
            assert!((norm_cdf(x) - v).abs() < 1e-12, "v={v}");
        }
        for i in -4000..=4000 {
            let x = i as f64 / 1000.0;
            let v = norm_cdf(x);
            assert!(
                (norm_quantile(v).unwrap() - x).abs() < 1e-10 * x.abs().max(1.0),
                "x={x}"
            );
        }
        for &v in &[1e-9, 1e-7, 1e-5, 1.0 - 1e-9] {
            let x = norm_quantile(v).unwrap();
            let back = norm_cdf(x);
            assert!((back - v).abs() < 1e-12, "v={v}");
        }
    }

    #[test]
    fn erf_inv_relates_to_quantile() {
        for i in 1..1000 {
            let v = i as f64 / 1000.0;
            let lhs = erf_inv(2.0 * v - 1.0);
            let rhs = norm_quantile(v).unwrap() / SQRT_2;
            assert!((lhs - rhs).abs() < 1e-10, "v={v}: {lhs} vs {rhs}");
        }
        assert_eq!(erf_inv(0.0), 0.0);
        assert!(erf_inv(1.0).is_infinite());
        assert!(erf_inv(1.5).is_nan());
    }

    #[test]
    fn symmetry_and_monotonicity() {
        let mut prev = 0.0;
        for i in -800..=800 {
            let x = i as f64 / 100.0;
            let p = norm_cdf(x);
            assert!(p >= prev);
            prev = p;
            assert!((norm_cdf(-x) - (1.0 - p)).abs() <= 1e-15);
        }
    }

    #[test]
    fn interval_prob_is_accurate_in_upper_tail() {
        let p = interval_prob(8.0, 9.0);
        let expected = norm_sf(8.0) - norm_sf(9.0);
        assert!(p > 0.0);
        assert!((p - expected).abs() < 1e-30);
        assert!((interval_prob(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-16);
    }
}
