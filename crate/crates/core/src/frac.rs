//! Discrete fractional calculus on uniform grids: left-sided
//! Riemann–Liouville integrals and derivatives, the fractional Volterra
//! kernel, and the operator pair `K_H` / `K_H^{-1}`.
//!
//! All quadratures are product-integration rules: the non-singular factor is
//! taken piecewise linear through its node values and the singular power
//! weight is integrated in closed form per cell. Plain Riemann sums diverge
//! at the kernel singularities, so no operator here ever samples a singular
//! weight pointwise.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::quad::integrate_tanh_sinh;
use crate::special::hyp2f1_neg;
use statrs::function::gamma::gamma;

/// Order of a fractional integral (`alpha > 0`) or derivative
/// (`0 < alpha < 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder(f64);

impl FracOrder {
    /// Order for [`rl_integral_left`]; any positive value is allowed.
    pub fn integral(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::parameter("alpha", "integral order must be > 0"));
        }
        Ok(FracOrder(alpha))
    }

    /// Order for [`rl_derivative_left`]; must lie strictly inside (0, 1).
    pub fn derivative(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
            return Err(Error::parameter("alpha", "derivative order must be in (0, 1)"));
        }
        Ok(FracOrder(alpha))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Hurst parameters of the two driving noises: `h` may be anywhere in (0,1)
/// (1/2 only as the Brownian self-test reduction), `h_tilde` must exceed 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstPair {
    pub h: f64,
    pub h_tilde: f64,
}

impl HurstPair {
    pub fn new(h: f64, h_tilde: f64) -> Result<Self> {
        check_hurst(h)?;
        if !(h_tilde > 0.5 && h_tilde < 1.0) {
            return Err(Error::parameter("h_tilde", "must lie in (1/2, 1)"));
        }
        Ok(HurstPair { h, h_tilde })
    }
}

pub(crate) fn check_hurst(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0 && h < 1.0) {
        return Err(Error::parameter("H", format!("Hurst parameter {h} outside (0, 1)")));
    }
    Ok(())
}

/// Normalization constant of the Volterra kernel, fixed so that
/// `int_0^{t ^ s} K_H(t,r) K_H(s,r) dr` equals the fBM covariance exactly.
pub fn kernel_norm_const(h: f64) -> f64 {
    (2.0 * h * gamma(1.5 - h) / (gamma(h + 0.5) * gamma(2.0 - 2.0 * h))).sqrt()
}

/// Scale factor between the normalized operator `K_H` and the bare
/// fractional-integral composition that its inverse is built from.
pub(crate) fn kernel_gamma(h: f64) -> f64 {
    kernel_norm_const(h) * gamma(h + 0.5)
}

/// Volterra kernel `K_H(t,s)` for `0 < s < t`.
pub fn volterra_kernel(t: f64, s: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    if !(s > 0.0 && s < t) {
        return Err(Error::Domain(format!(
            "volterra_kernel requires 0 < s < t, got s = {s}, t = {t}"
        )));
    }
    if h == 0.5 {
        return Ok(1.0);
    }
    Ok((t - s).powf(h - 0.5) * volterra_smooth(t, s, h)?)
}

/// Smooth factor `g` with `K_H(t,s) = (t-s)^{H-1/2} g(t,s)`. Still singular
/// as `s -> 0` (like `s^{-|H-1/2|}`), but regular at `s = t`.
pub(crate) fn volterra_smooth(t: f64, s: f64, h: f64) -> Result<f64> {
    let z = 1.0 - t / s;
    Ok(kernel_norm_const(h) * hyp2f1_neg(h - 0.5, 0.5 - h, h + 0.5, z)?)
}

/// `int_{s0}^{s1} K_H(t,s)^2 ds` for one grid cell, `s1 <= t`. Used by the
/// variance-exact Volterra sampler weights.
pub(crate) fn kernel_cell_l2(t: f64, s0: f64, s1: f64, h: f64) -> Result<f64> {
    if h == 0.5 {
        return Ok(s1 - s0);
    }
    if s0 <= 0.0 {
        // Kernel is singular at s = 0; integrate the cell adaptively.
        let val = integrate_tanh_sinh(
            |s| match volterra_kernel(t, s, h) {
                Ok(k) => k * k,
                Err(_) => 0.0,
            },
            0.0,
            s1,
            1e-10,
        );
        return Ok(val);
    }
    let mid = 0.5 * (s0 + s1);
    let g = volterra_smooth(t, mid, h)?;
    let u0 = t - s0;
    let u1 = t - s1;
    Ok(g * g * (u0.powf(2.0 * h) - u1.powf(2.0 * h)) / (2.0 * h))
}

/// fBM covariance `R_H(t,s) = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn covariance_r(t: f64, s: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    if t < 0.0 || s < 0.0 {
        return Err(Error::Domain("covariance_r requires t, s >= 0".into()));
    }
    Ok(0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h)))
}

/// Quadrature oracle for the kernel factorization
/// `int_0^{t ^ s} K_H(t,r) K_H(s,r) dr`; compared against [`covariance_r`]
/// in the self-tests.
pub fn kernel_covariance_quad(t: f64, s: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    if !(t > 0.0 && s > 0.0) {
        return Err(Error::Domain("kernel_covariance_quad requires t, s > 0".into()));
    }
    let m = t.min(s);
    let hi = t.max(s);
    if h == 0.5 {
        return Ok(m);
    }
    let f = |r: f64| match (volterra_kernel(t, r, h), volterra_kernel(s, r, h)) {
        (Ok(a), Ok(b)) => a * b,
        _ => 0.0,
    };
    // Both endpoints can be singular. Tanh-sinh keeps full precision only
    // when the singular offset is formed exactly, so the upper half is
    // integrated in reflected coordinates v = m - r with the singular power
    // (m - r)^{H-1/2} of the lower-time kernel taken from v directly.
    let lower = integrate_tanh_sinh(&f, 0.0, 0.5 * m, 1e-11);
    let upper = integrate_tanh_sinh(
        |v: f64| {
            let r = m - v;
            let k_m = v.powf(h - 0.5) * volterra_smooth(m, r, h).unwrap_or(0.0);
            let k_hi = if hi > m {
                volterra_kernel(hi, r, h).unwrap_or(0.0)
            } else {
                v.powf(h - 0.5) * volterra_smooth(hi, r, h).unwrap_or(0.0)
            };
            k_m * k_hi
        },
        0.0,
        0.5 * m,
        1e-11,
    );
    Ok(lower + upper)
}

fn validate_grid_fn(f: &GridFunction, what: &str) -> Result<()> {
    if f.node_count() < 2 {
        return Err(Error::Domain(format!("{what}: grid must have at least 2 nodes")));
    }
    f.check_finite(what)
}

/// Left-sided Riemann–Liouville integral
/// `(I^a f)(x) = Gamma(a)^{-1} int_0^x f(y) (x-y)^{a-1} dy` at every node.
pub fn rl_integral_left(f: &GridFunction, alpha: FracOrder) -> Result<GridFunction> {
    validate_grid_fn(f, "rl_integral_left input")?;
    let a = alpha.value();
    let mut out = GridFunction::zeros(f.grid(), f.dim());
    for k in 0..f.dim() {
        let comp = f.component(k);
        let vals = rl_integral_component(&comp, f.grid().dt(), a);
        out.set_component(k, &vals);
    }
    Ok(out)
}

fn rl_integral_component(v: &[f64], dt: f64, alpha: f64) -> Vec<f64> {
    let n = v.len();
    let norm = 1.0 / gamma(alpha);
    let pow_a: Vec<f64> = (0..=n).map(|k| (k as f64 * dt).powf(alpha)).collect();
    let pow_a1: Vec<f64> = (0..=n).map(|k| (k as f64 * dt).powf(alpha + 1.0)).collect();
    let mut out = vec![0.0; n];
    for i in 1..n {
        let mut acc = 0.0;
        for j in 0..i {
            let k = i - j;
            let m0 = (pow_a[k] - pow_a[k - 1]) / alpha;
            let m1 = (k as f64 * dt) * m0 - (pow_a1[k] - pow_a1[k - 1]) / (alpha + 1.0);
            let slope = (v[j + 1] - v[j]) / dt;
            acc += v[j] * m0 + slope * m1;
        }
        out[i] = norm * acc;
    }
    out
}

/// Left-sided Riemann–Liouville derivative in Weyl form,
/// `(D^a f)(x) = Gamma(1-a)^{-1} [ f(x) x^{-a} + a int_0^x (f(x)-f(y)) (x-y)^{-a-1} dy ]`.
///
/// The value at the first node (where `x^{-a}` blows up) is linearly
/// extrapolated from the next two nodes.
pub fn rl_derivative_left(f: &GridFunction, alpha: FracOrder) -> Result<GridFunction> {
    validate_grid_fn(f, "rl_derivative_left input")?;
    let a = alpha.value();
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::parameter("alpha", "derivative order must be in (0, 1)"));
    }
    let mut out = GridFunction::zeros(f.grid(), f.dim());
    for k in 0..f.dim() {
        let comp = f.component(k);
        let vals = rl_derivative_component(&comp, f.grid().dt(), a);
        out.set_component(k, &vals);
    }
    Ok(out)
}

fn rl_derivative_component(v: &[f64], dt: f64, alpha: f64) -> Vec<f64> {
    let n = v.len();
    let norm = 1.0 / gamma(1.0 - alpha);
    let pow_na: Vec<f64> = (0..=n)
        .map(|k| if k == 0 { 0.0 } else { (k as f64 * dt).powf(-alpha) })
        .collect();
    let pow_1a: Vec<f64> = (0..=n).map(|k| (k as f64 * dt).powf(1.0 - alpha)).collect();
    let mut out = vec![0.0; n];
    for i in 1..n {
        let mut acc = v[i] * pow_na[i];
        let mut sum = 0.0;
        for j in 0..i.saturating_sub(1) {
            let k = i - j;
            let n0 = (pow_na[k - 1] - pow_na[k]) / alpha;
            let n1 = (k as f64 * dt) * n0 - (pow_1a[k] - pow_1a[k - 1]) / (1.0 - alpha);
            let slope = (v[j + 1] - v[j]) / dt;
            sum += (v[i] - v[j]) * n0 - slope * n1;
        }
        // Last cell: for piecewise-linear f the difference quotient equals the
        // slope exactly and the singular integral has a closed form.
        let slope_last = (v[i] - v[i - 1]) / dt;
        sum += slope_last * pow_1a[1] / (1.0 - alpha);
        acc += alpha * sum;
        out[i] = norm * acc;
    }
    extrapolate_first_node(&mut out);
    out
}

fn extrapolate_first_node(v: &mut [f64]) {
    if v.len() >= 3 {
        v[0] = 2.0 * v[1] - v[2];
    } else if v.len() == 2 {
        v[0] = v[1];
    }
}

/// `(K_H f)(t) = int_0^t K_H(t,s) f(s) ds` at every node.
pub fn apply_k_h(f: &GridFunction, h: f64) -> Result<GridFunction> {
    check_hurst(h)?;
    validate_grid_fn(f, "apply_k_h input")?;
    let grid = f.grid();
    let n = grid.node_count();
    let dt = grid.dt();
    let dim = f.dim();
    let mut out = GridFunction::zeros(grid, dim);

    if h == 0.5 {
        // Kernel is identically 1: running trapezoid (exact for the
        // piecewise-linear interpolant).
        for i in 1..n {
            let prev = out.value(i - 1).to_vec();
            let (a, b) = (f.value(i - 1).to_vec(), f.value(i).to_vec());
            let o = out.value_mut(i);
            for k in 0..dim {
                o[k] = prev[k] + 0.5 * dt * (a[k] + b[k]);
            }
        }
        return Ok(out);
    }

    let hp = h + 0.5;
    let pow_h: Vec<f64> = (0..=n).map(|k| (k as f64 * dt).powf(hp)).collect();
    let pow_h1: Vec<f64> = (0..=n).map(|k| (k as f64 * dt).powf(hp + 1.0)).collect();
    let mut phi = vec![0.0; n * dim];

    for i in 1..n {
        let t = grid.node(i);
        if i == 1 {
            // Single cell with both endpoints troublesome; integrate the
            // exact kernel against the linear interpolant adaptively.
            let f0 = f.value(0).to_vec();
            let f1 = f.value(1).to_vec();
            let o = out.value_mut(1);
            for k in 0..dim {
                o[k] = integrate_tanh_sinh(
                    |s| {
                        let w = s / dt;
                        let fv = (1.0 - w) * f0[k] + w * f1[k];
                        volterra_kernel(t, s, h).map_or(0.0, |kv| kv * fv)
                    },
                    0.0,
                    t,
                    1e-10,
                );
            }
            continue;
        }
        // Smooth-factor values at the nodes; the s = 0 node is extrapolated
        // because g is singular there.
        for j in 1..=i {
            let g = volterra_smooth(t, grid.node(j), h)?;
            let fv = f.value(j);
            for k in 0..dim {
                phi[j * dim + k] = g * fv[k];
            }
        }
        for k in 0..dim {
            phi[k] = 2.0 * phi[dim + k] - phi[2 * dim + k];
        }
        let o = out.value_mut(i);
        for (k, ok) in o.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..i {
                let kk = i - j;
                let m0 = (pow_h[kk] - pow_h[kk - 1]) / hp;
                let m1 = (kk as f64 * dt) * m0 - (pow_h1[kk] - pow_h1[kk - 1]) / (hp + 1.0);
                let a = phi[j * dim + k];
                let slope = (phi[(j + 1) * dim + k] - a) / dt;
                acc += a * m0 + slope * m1;
            }
            *ok = acc;
        }
    }
    Ok(out)
}

/// Inverse operator `K_H^{-1}` applied to an absolutely continuous path `h`
/// with `h(0) = 0`:
///
/// - `H > 1/2`: `s^{H-1/2} D_{0+}^{H-1/2} [ u^{1/2-H} h'(u) ](s)`
/// - `H < 1/2`: `s^{H-1/2} I_{0+}^{1/2-H} [ u^{1/2-H} h'(u) ](s)`
/// - `H = 1/2`: `h'`
///
/// `h'` is taken by forward differences on cells assigned to left nodes,
/// matching the left-point convention of the stochastic integrals. Power
/// weights singular at `s = 0` are replaced at the first node by linear
/// extrapolation from the next two nodes.
pub fn apply_k_h_inverse(hf: &GridFunction, h: f64) -> Result<GridFunction> {
    check_hurst(h)?;
    validate_grid_fn(hf, "apply_k_h_inverse input")?;
    let grid = hf.grid();
    let n = grid.node_count();
    if n < 3 {
        return Err(Error::Domain("apply_k_h_inverse needs at least 3 nodes".into()));
    }
    let h0_norm = hf.value(0).iter().map(|v| v.abs()).fold(0.0, f64::max);
    let scale = hf.raw().iter().map(|v| v.abs()).fold(0.0, f64::max);
    if h0_norm > 1e-8 * (scale + 1e-12) {
        return Err(Error::Contract(format!(
            "apply_k_h_inverse requires h(0) = 0, got |h(0)| = {h0_norm}"
        )));
    }
    let dt = grid.dt();
    let dim = hf.dim();

    // Forward differences on cells, assigned to left nodes; the last node
    // repeats the final cell.
    let mut hp = GridFunction::zeros(grid, dim);
    for j in 0..n - 1 {
        let a = hf.value(j).to_vec();
        let b = hf.value(j + 1).to_vec();
        let o = hp.value_mut(j);
        for k in 0..dim {
            o[k] = (b[k] - a[k]) / dt;
        }
    }
    let last = hp.value(n - 2).to_vec();
    hp.value_mut(n - 1).copy_from_slice(&last);

    if h == 0.5 {
        return Ok(hp);
    }

    // Inner weight u^{1/2-H} h'(u), singular or vanishing at u = 0.
    let mut w = GridFunction::zeros(grid, dim);
    for j in 1..n {
        let p = grid.node(j).powf(0.5 - h);
        let src = hp.value(j).to_vec();
        let o = w.value_mut(j);
        for k in 0..dim {
            o[k] = p * src[k];
        }
    }
    let (w1, w2) = (w.value(1).to_vec(), w.value(2).to_vec());
    {
        let o = w.value_mut(0);
        for k in 0..dim {
            o[k] = 2.0 * w1[k] - w2[k];
        }
    }

    let inner = if h > 0.5 {
        rl_derivative_left(&w, FracOrder::derivative(h - 0.5)?)?
    } else {
        rl_integral_left(&w, FracOrder::integral(0.5 - h)?)?
    };

    let gamma_h = kernel_gamma(h);
    let mut out = GridFunction::zeros(grid, dim);
    for j in 1..n {
        let p = grid.node(j).powf(h - 0.5) / gamma_h;
        let src = inner.value(j).to_vec();
        let o = out.value_mut(j);
        for k in 0..dim {
            o[k] = p * src[k];
        }
    }
    let (o1, o2) = (out.value(1).to_vec(), out.value(2).to_vec());
    {
        let o = out.value_mut(0);
        for k in 0..dim {
            o[k] = 2.0 * o1[k] - o2[k];
        }
    }
    Ok(out)
}
