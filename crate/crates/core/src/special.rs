//! Normal CDF and quantile, chi-square survival function.

use crate::error::{Error, Result};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;
use std::f64::consts::{PI, SQRT_2};

/// Standard normal CDF, `Φ(z)`.
///
/// Evaluated through `erfc` so that the lower tail keeps full relative
/// precision.
pub fn gaussian_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Log of the standard normal density.
pub fn log_gaussian_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

// Acklam's rational approximation, relative error ~1.15e-9 before polishing.
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

fn acklam(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// Standard normal quantile, `Φ⁻¹(p)`, for `p` strictly inside `(0, 1)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    let x = acklam(p);
    // One Halley step against the erfc-based CDF.
    let e = if x < 0.0 {
        gaussian_cdf(x) - p
    } else {
        // upper tail: work with the complement to keep precision
        (1.0 - p) - gaussian_cdf(-x)
    };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Upper tail `P(χ²_dof > t)`.
pub fn chisq_sf(t: f64, dof: usize) -> f64 {
    assert!(dof >= 1, "chi-square needs at least one degree of freedom");
    if t.is_nan() {
        return f64::NAN;
    }
    if t <= 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    gamma_ur(dof as f64 / 2.0, t / 2.0).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erf;

    #[test]
    fn cdf_matches_erf_identity() {
        let mut z = -8.0;
        while z <= 8.0 {
            let via_erf = 0.5 * (1.0 + erf(z / SQRT_2));
            assert!((gaussian_cdf(z) - via_erf).abs() <= 1e-12, "z = {z}");
            z += 0.01;
        }
    }

    #[test]
    fn cdf_known_values() {
        assert_eq!(gaussian_cdf(0.0), 0.5);
        assert!((gaussian_cdf(1.959964) - 0.975).abs() < 1e-6);
        for &z in &[0.1, 0.7, 1.3, 2.9, 5.5] {
            assert!((gaussian_cdf(z) + gaussian_cdf(-z) - 1.0).abs() < 1e-14);
        }
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gaussian_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_known_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-6);
        assert!((normal_quantile(0.975).unwrap() - bisect_quantile(0.975)).abs() < 1e-9);
    }

    #[test]
    fn quantile_round_trip() {
        let grid = [1e-12, 1e-8, 1e-4, 0.01, 0.02425, 0.1, 0.3, 0.5, 0.77, 0.95, 0.99, 0.9999];
        for &p in &grid {
            let x = normal_quantile(p).unwrap();
            assert!((gaussian_cdf(x) - p).abs() <= 1e-9 * p.max(1e-3), "p = {p}");
            assert!((x - bisect_quantile(p)).abs() <= 1e-9, "p = {p}");
        }
    }

    #[test]
    fn quantile_rejects_boundary() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn chisq_identities() {
        assert_eq!(chisq_sf(0.0, 3), 1.0);
        let mut t: f64 = 0.01;
        while t < 60.0 {
            let one = 2.0 * (1.0 - gaussian_cdf(t.sqrt()));
            assert!((chisq_sf(t, 1) - one).abs() <= 1e-10, "t = {t}");
            assert!((chisq_sf(t, 2) - (-t / 2.0).exp()).abs() <= 1e-12, "t = {t}");
            t *= 1.3;
        }
    }
}
