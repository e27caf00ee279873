//! Scalar special functions shared by the distribution families.

// Unused when std is linked elsewhere in the build graph, which supplies
// inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;

pub const SQRT_2: f64 = core::f64::consts::SQRT_2;
/// 1/sqrt(pi)
pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
/// 1/sqrt(2 pi)
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF, accurate in relative terms in the lower tail.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// `ln Φ(z)` without underflow for very negative `z`.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > -37.0 {
        return norm_cdf(z).ln();
    }
    // Asymptotic expansion of the Mills ratio.
    let t = 1.0 / (z * z);
    let series = 1.0 - t * (1.0 - 3.0 * t * (1.0 - 5.0 * t * (1.0 - 7.0 * t * (1.0 - 9.0 * t))));
    -0.5 * z * z - (-z).ln() - 0.5 * (2.0 * core::f64::consts::PI).ln() + series.ln()
}

/// `ln φ(z)`.
pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.918_938_533_204_672_8
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley step, which brings
/// the result to near machine precision over (0, 1).
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement; the error term uses the tail that keeps precision.
    let e = if x < 0.0 {
        norm_cdf(x) - p
    } else {
        (1.0 - p) - norm_cdf(-x)
    };
    let u = e * (2.0 * core::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Standard logistic CDF.
pub fn logistic_cdf(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        // Φ(-1) from standard tables.
        assert!((norm_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.1, 0.3, 0.5, 0.77, 0.99, 1.0 - 1e-9] {
            let z = norm_quantile(p);
            let back = norm_cdf(z);
            assert!(
                (back - p).abs() <= 1e-13 * p.max(1e-3),
                "p={p} z={z} back={back}"
            );
        }
        // 11/12 quantile, used for the default central interval.
        assert!((norm_quantile(11.0 / 12.0) - 1.382_994_127_100_643).abs() < 1e-12);
    }

    #[test]
    fn log_cdf_matches_direct_and_asymptotic_regimes() {
        for &z in &[-36.9, -20.0, -5.0, 0.0, 3.0] {
            assert!(
                (log_norm_cdf(z) - norm_cdf(z).ln()).abs()
                    < 1e-12 * norm_cdf(z).ln().abs().max(1.0)
            );
        }
        // Continuity across the switch point.
        let a = log_norm_cdf(-37.0 + 1e-9);
        let b = log_norm_cdf(-37.0 - 1e-9);
        assert!((a - b).abs() < 1e-6);
        assert!(log_norm_cdf(-1e4).is_finite());
    }

    #[test]
    fn softplus_and_logistic() {
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert_eq!(logistic_cdf(0.0), 0.5);
        assert!(logistic_cdf(-800.0) >= 0.0);
    }
}
