//! Special-function support: the Gauss hypergeometric function on the
//! non-positive real axis (as it appears in the fractional Volterra kernel),
//! Gaussian CDF helpers, and the inverse normal used by the counter-based
//! samplers.

use crate::error::{Error, Result};
use statrs::function::erf;
use statrs::function::gamma::gamma;

const SERIES_TOL: f64 = 1e-12;
const MAX_TERMS: usize = 200_000;

/// Maclaurin series of F(a,b;c;z), valid for |z| < 1. Truncates when the
/// relative term drops below `SERIES_TOL`.
fn hyp_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0f64;
    let mut acc = 1.0f64;
    for n in 0..MAX_TERMS {
        let nf = n as f64;
        let denom = (c + nf) * (nf + 1.0);
        if denom == 0.0 {
            return Err(Error::Numeric(format!(
                "hypergeometric series hit pole at c = {c}, n = {n}"
            )));
        }
        term *= (a + nf) * (b + nf) / denom * z;
        acc += term;
        if term.abs() <= SERIES_TOL * acc.abs().max(1e-300) {
            return Ok(acc);
        }
    }
    Err(Error::Numeric(format!(
        "hypergeometric series did not converge (a={a}, b={b}, c={c}, z={z})"
    )))
}

/// Connection formula for argument `w` near 1, given `x = 1 - w` computed
/// stably by the caller. Requires `c - a - b` non-integer.
fn hyp_via_one_minus_w(a: f64, b: f64, c: f64, x: f64) -> Result<f64> {
    let s = c - a - b;
    let t1 = gamma(c) * gamma(s) / (gamma(c - a) * gamma(c - b)) * hyp_series(a, b, 1.0 - s, x)?;
    let t2 = gamma(c) * gamma(-s) / (gamma(a) * gamma(b))
        * x.powf(s)
        * hyp_series(c - a, c - b, 1.0 + s, x)?;
    Ok(t1 + t2)
}

/// Gauss hypergeometric function F(a,b;c;z) for `z <= 0`.
///
/// Strategy: direct series for |z| <= 1/2; otherwise the Pfaff transform
/// F(a,b;c;z) = (1-z)^{-a} F(a, c-b; c; z/(z-1)) maps to w in (0,1), where the
/// series is used for w <= 3/4 and the 1-w connection formula past that.
/// When `c - a - b` is within 0.05 of an integer the connection coefficients
/// are ill-conditioned and a (slower) direct series at w is used instead.
pub fn hyp2f1_neg(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if z > 0.0 {
        return Err(Error::parameter("z", "hyp2f1_neg requires z <= 0"));
    }
    if a == 0.0 || b == 0.0 || z == 0.0 {
        return Ok(1.0);
    }
    if z.abs() <= 0.5 {
        return hyp_series(a, b, c, z);
    }
    // Pfaff argument w = z/(z-1); its distance to 1 is formed directly so it
    // stays exact for arbitrarily large |z|.
    let x = 1.0 / (1.0 - z);
    let w = -z * x;
    let pref = (1.0 - z).powf(-a);
    let (aa, bb) = (a, c - b);
    if w <= 0.75 {
        return Ok(pref * hyp_series(aa, bb, c, w)?);
    }
    let s = c - aa - bb;
    if (s - s.round()).abs() < 0.05 {
        // Degenerate connection coefficients; fall back to the plain series,
        // which still converges (slowly) for w < 1.
        return Ok(pref * hyp_series(aa, bb, c, w)?);
    }
    Ok(pref * hyp_via_one_minus_w(aa, bb, c, x)?)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function, used to turn counter-based uniforms
/// into Gaussians.
pub fn normal_inv_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    std::f64::consts::SQRT_2 * erf::erf_inv(2.0 * p - 1.0)
}

/// Two-sided Kolmogorov–Smirnov statistic between two samples.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// 95%-level two-sample KS rejection threshold.
pub fn ks_threshold_95(n: usize, m: usize) -> f64 {
    1.358 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 30-digit arbitrary-precision arithmetic.
    const CASES: &[(f64, f64, f64, f64, f64)] = &[
        (0.25, -0.25, 1.25, -0.5, 1.02281507113464975906),
        (0.25, -0.25, 1.25, -3.0, 1.10333873892355016463),
        (0.25, -0.25, 1.25, -99.0, 1.78100667231469481167),
        (-0.2, 0.2, 0.8, -0.5, 1.02227769803603123505),
        (-0.2, 0.2, 0.8, -7.0, 1.16632238063171818490),
        (-0.2, 0.2, 0.8, -1999.0, 2.68152492498929199147),
        (-0.2, 0.2, 0.8, -4095.0, 3.06359568535496594892),
        (0.2, -0.2, 1.2, -1.0, 1.02805485886376634254),
        (0.2, -0.2, 1.2, -31.0, 1.28489979880675094578),
        (0.2, -0.2, 1.2, -4095.0, 2.75006481281226423977),
    ];

    #[test]
    fn hyp2f1_matches_reference_values() {
        for &(a, b, c, z, want) in CASES {
            let got = hyp2f1_neg(a, b, c, z).unwrap();
            assert!(
                (got - want).abs() < 1e-11 * want.abs(),
                "F({a},{b},{c},{z}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn hyp2f1_zero_parameter_is_one() {
        assert_eq!(hyp2f1_neg(0.0, 0.3, 1.0, -5.0).unwrap(), 1.0);
        assert_eq!(hyp2f1_neg(0.3, 0.0, 1.0, -5.0).unwrap(), 1.0);
    }

    #[test]
    fn hyp2f1_rejects_positive_argument() {
        assert!(hyp2f1_neg(0.2, 0.2, 1.0, 0.1).is_err());
    }

    #[test]
    fn gamma_reflection_for_negative_arguments() {
        // The connection coefficients need Gamma at negative non-integers.
        assert!((gamma(-0.25) + 4.901666809860711).abs() < 1e-12);
    }

    #[test]
    fn normal_inverse_roundtrip() {
        for &p in &[1e-6, 0.025, 0.3, 0.5, 0.84, 0.999999] {
            let x = normal_inv_cdf(p);
            assert!((normal_cdf(x) - p).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn ks_statistic_identical_samples_is_zero() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_statistic(&xs, &xs), 0.0);
    }

    #[test]
    fn ks_statistic_disjoint_samples_is_one() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = (100..150).map(|i| i as f64).collect();
        assert_eq!(ks_statistic(&xs, &ys), 1.0);
    }
}
