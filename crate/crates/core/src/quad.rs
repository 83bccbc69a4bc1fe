//! Small quadrature toolbox: Gauss–Legendre rules for smooth integrands
//! (Gramian integrals) and tanh-sinh for integrands with endpoint
//! singularities (kernel self-consistency oracles, singular first cells).

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `∫_a^b f` by the `n`-point Gauss–Legendre rule.
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// `∫_a^b f` by tanh-sinh (double-exponential) quadrature. Tolerates
/// integrable singularities at either endpoint; the integrand is never
/// evaluated at `a` or `b` exactly.
pub fn integrate_tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    // Abscissas are handled as offsets delta = 1 - |phi(t)| from the nearest
    // endpoint so that points exponentially close to a or b keep full
    // precision: 1 - tanh(s) = 2 / (e^{2s} + 1).
    let eval = |t: f64| -> (f64, f64) {
        let s = 0.5 * PI * t.sinh();
        let delta = 2.0 / ((2.0 * s).exp() + 1.0);
        let w = 0.5 * PI * t.cosh() / s.cosh().powi(2);
        (delta, w)
    };
    // phi(4) differs from 1 by ~1e-59, far past f64 resolution near the ends.
    let t_max = 4.0;

    // Trapezoid sum at step h over positive multiples k*h, exploiting the
    // symmetry of the rule.
    let sum_at = |h: f64, odd_only: bool| -> f64 {
        let mut acc = 0.0;
        let mut k = 1;
        loop {
            let t = h * k as f64;
            if t > t_max {
                break;
            }
            let (delta, w) = eval(t);
            // Points whose offset from an endpoint is below f64 resolution
            // are dropped; for integrable singularities their weighted
            // contribution is double-exponentially small.
            let xa = a + half * delta;
            let xb = b - half * delta;
            if xa > a {
                acc += w * f(xa);
            }
            if xb < b {
                acc += w * f(xb);
            }
            k += if odd_only { 2 } else { 1 };
        }
        acc
    };

    let mut h = 1.0;
    let w0 = 0.5 * PI;
    let mut result = (w0 * f(mid) + sum_at(h, false)) * h * half;
    let mut prev;
    for level in 1..=11 {
        prev = result;
        h *= 0.5;
        result = 0.5 * prev + sum_at(h, true) * h * half;
        if level > 2 && (result - prev).abs() <= tol * result.abs().max(1e-300) {
            break;
        }
    }
    result
}
