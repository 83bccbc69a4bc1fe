//! Fractional Brownian motion sampling and Wiener integrals.
//!
//! Two samplers are provided: the Volterra construction (driving increments
//! against kernel weights, used by the solvers because it exposes the
//! underlying Wiener increments needed for Girsanov weights) and a dense
//! Cholesky factorization of the exact covariance, which serves as the
//! distributional ground truth in tests.

use crate::error::{Error, Result};
use crate::frac::{check_hurst, covariance_r, kernel_cell_l2};
use crate::grid::{GridFunction, TimeGrid};
use crate::special::normal_inv_cdf;
use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Identifies one reproducible Gaussian stream. Distinct `(seed, stream)`
/// pairs give statistically independent streams; equal pairs reproduce
/// bit-identical output regardless of thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSpec { seed, stream }
    }

    /// Counter-based uniform stream keyed by `(seed, stream)`.
    fn rng(&self) -> ChaCha8Rng {
        let mut state = self.seed ^ self.stream.wrapping_mul(GOLDEN);
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// `n` standard normals via inverse-CDF of the uniform stream.
    pub fn standard_normals(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..n)
            .map(|_| {
                let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0);
                normal_inv_cdf(u)
            })
            .collect()
    }
}

/// Per-path driving noise: Wiener increments for both drivers and the two
/// fBM paths built from them. The drivers draw from disjoint streams, so
/// they are independent.
#[derive(Debug, Clone)]
pub struct NoiseBundle {
    pub grid: TimeGrid,
    /// Increments of the Wiener process under the rough driver, `dim` per cell.
    pub dw: GridFunction,
    /// Increments of the Wiener process under the smooth driver.
    pub dw_tilde: GridFunction,
    /// fBM path of the rough driver, `B_H(0) = 0`.
    pub b_h: GridFunction,
    /// fBM path of the smooth driver.
    pub b_tilde: GridFunction,
}

impl NoiseBundle {
    /// Increment of `b_h` over cell `i`.
    pub fn db_h(&self, i: usize, k: usize) -> f64 {
        self.b_h.value(i + 1)[k] - self.b_h.value(i)[k]
    }

    pub fn db_tilde(&self, i: usize, k: usize) -> f64 {
        self.b_tilde.value(i + 1)[k] - self.b_tilde.value(i)[k]
    }
}

/// Volterra-construction sampler: lower-triangular weight table applied to
/// i.i.d. Wiener increments. Weights are per-cell root-mean-square kernel
/// values, which makes every node variance match `t^{2H}` exactly.
pub struct VolterraSampler {
    grid: TimeGrid,
    h: f64,
    /// `weights[i-1][j]` multiplies increment `j < i` in the value at node `i`.
    weights: Vec<Vec<f64>>,
}

impl VolterraSampler {
    pub fn new(grid: TimeGrid, h: f64) -> Result<Self> {
        check_hurst(h)?;
        let n = grid.steps();
        let dt = grid.dt();
        let mut weights = Vec::with_capacity(n);
        for i in 1..=n {
            let t = grid.node(i);
            let mut row = Vec::with_capacity(i);
            for j in 0..i {
                let cell = kernel_cell_l2(t, grid.node(j), grid.node(j + 1), h)?;
                row.push((cell.max(0.0) / dt).sqrt());
            }
            weights.push(row);
        }
        Ok(VolterraSampler { grid, h, weights })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Path from given increments (one `dim`-vector per cell; the increment
    /// function carries them on the cell's left node).
    pub fn path(&self, dw: &GridFunction) -> Result<GridFunction> {
        if dw.grid() != self.grid {
            return Err(Error::Contract("increment grid differs from sampler grid".into()));
        }
        let dim = dw.dim();
        let n = self.grid.steps();
        let mut out = GridFunction::zeros(self.grid, dim);
        for i in 1..=n {
            let row = &self.weights[i - 1];
            let mut acc = vec![0.0; dim];
            for (j, w) in row.iter().enumerate() {
                let inc = dw.value(j);
                for k in 0..dim {
                    acc[k] += w * inc[k];
                }
            }
            out.value_mut(i).copy_from_slice(&acc);
        }
        Ok(out)
    }
}

/// fBM path from explicit increments via the Volterra construction.
pub fn sample_fbm_volterra(dw: &GridFunction, h: f64, grid: TimeGrid) -> Result<GridFunction> {
    VolterraSampler::new(grid, h)?.path(dw)
}

/// Dense exact sampler: Cholesky factor of the covariance matrix
/// `[R_H(t_i, t_j)]` over the non-zero nodes.
pub struct CholeskySampler {
    grid: TimeGrid,
    factor: DMatrix<f64>,
}

impl CholeskySampler {
    pub fn new(grid: TimeGrid, h: f64) -> Result<Self> {
        check_hurst(h)?;
        let n = grid.steps();
        if grid.node_count() > 4096 {
            return Err(Error::Capacity(format!(
                "dense factorization limited to 4096 nodes, grid has {}",
                grid.node_count()
            )));
        }
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] = covariance_r(grid.node(i + 1), grid.node(j + 1), h)?;
            }
        }
        let mut jitter = 0.0;
        for _ in 0..6 {
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = m.cholesky() {
                if jitter > 0.0 && jitter > 1e-8 {
                    return Err(Error::Numeric(format!(
                        "covariance matrix needed jitter {jitter} to factor; grid too fine for H = {h}"
                    )));
                }
                return Ok(CholeskySampler {
                    grid,
                    factor: chol.l(),
                });
            }
            jitter = if jitter == 0.0 { 1e-14 } else { jitter * 100.0 };
        }
        Err(Error::Numeric(format!(
            "Cholesky factorization of the fBM covariance failed for H = {h}, {n} nodes: matrix numerically not positive definite"
        )))
    }

    /// One scalar path (dimension 1) drawn from the stream.
    pub fn path(&self, rng: RngSpec) -> GridFunction {
        let n = self.grid.steps();
        let z = rng.standard_normals(n);
        let zv = nalgebra::DVector::from_vec(z);
        let x = &self.factor * zv;
        let mut out = GridFunction::zeros(self.grid, 1);
        for i in 1..=n {
            out.value_mut(i)[0] = x[i - 1];
        }
        out
    }
}

/// Exact-covariance fBM path (scalar) for distributional tests.
pub fn sample_fbm_cholesky(grid: TimeGrid, h: f64, rng: RngSpec) -> Result<GridFunction> {
    Ok(CholeskySampler::new(grid, h)?.path(rng))
}

/// Left-point Wiener integral of a deterministic matrix-valued integrand
/// against an fBM path: `t -> sum_{cells} sigma(t_j) (B_{j+1} - B_j)`.
pub fn wiener_integral(sigma: &GridFunction, fbm: &GridFunction) -> Result<GridFunction> {
    if sigma.grid() != fbm.grid() {
        return Err(Error::Contract("sigma and path live on different grids".into()));
    }
    let d = fbm.dim();
    if sigma.dim() != d * d {
        return Err(Error::Contract(format!(
            "sigma must be {d}x{d} matrix-valued (dim {}), got dim {}",
            d * d,
            sigma.dim()
        )));
    }
    let n = fbm.grid().steps();
    let mut out = GridFunction::zeros(fbm.grid(), d);
    for i in 0..n {
        let m = sigma.value(i);
        let prev = out.value(i).to_vec();
        let db: Vec<f64> = (0..d)
            .map(|k| fbm.value(i + 1)[k] - fbm.value(i)[k])
            .collect();
        let o = out.value_mut(i + 1);
        for r in 0..d {
            let mut acc = prev[r];
            for (c, dbc) in db.iter().enumerate() {
                acc += m[r * d + c] * dbc;
            }
            o[r] = acc;
        }
    }
    Ok(out)
}

/// Generator for the per-path noise of the two-driver equation.
pub struct NoiseGenerator {
    grid: TimeGrid,
    dim: usize,
    rough: VolterraSampler,
    smooth: VolterraSampler,
    seed: u64,
}

impl NoiseGenerator {
    pub fn new(grid: TimeGrid, dim: usize, h: f64, h_tilde: f64, seed: u64) -> Result<Self> {
        Ok(NoiseGenerator {
            grid,
            dim,
            rough: VolterraSampler::new(grid, h)?,
            smooth: VolterraSampler::new(grid, h_tilde)?,
            seed,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Noise for one path. Driver streams are `2*path` and `2*path + 1`, so
    /// the two drivers are independent and paths are independent.
    pub fn bundle(&self, path: u64) -> Result<NoiseBundle> {
        let n = self.grid.steps();
        let dt = self.grid.dt();
        let sq = dt.sqrt();
        let make_dw = |stream: u64| -> GridFunction {
            let z = RngSpec::new(self.seed, stream).standard_normals(n * self.dim);
            let mut dw = GridFunction::zeros(self.grid, self.dim);
            for i in 0..n {
                let o = dw.value_mut(i);
                for k in 0..self.dim {
                    o[k] = sq * z[i * self.dim + k];
                }
            }
            dw
        };
        let dw = make_dw(2 * path);
        let dw_tilde = make_dw(2 * path + 1);
        let b_h = self.rough.path(&dw)?;
        let b_tilde = self.smooth.path(&dw_tilde)?;
        Ok(NoiseBundle {
            grid: self.grid,
            dw,
            dw_tilde,
            b_h,
            b_tilde,
        })
    }

    /// Noise bundles for paths `0..n_paths`, generated in parallel with
    /// deterministic ordering.
    pub fn bundles(&self, n_paths: usize) -> Result<Vec<NoiseBundle>> {
        use rayon::prelude::*;
        (0..n_paths)
            .into_par_iter()
            .map(|p| self.bundle(p as u64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{mean, pairwise_sum};
    use crate::special::{ks_statistic, ks_threshold_95};

    #[test]
    fn rng_streams_are_reproducible_and_distinct() {
        let a = RngSpec::new(7, 3).standard_normals(64);
        let b = RngSpec::new(7, 3).standard_normals(64);
        assert_eq!(a, b);
        let c = RngSpec::new(7, 4).standard_normals(64);
        assert_ne!(a, c);
        let d = RngSpec::new(8, 3).standard_normals(64);
        assert_ne!(a, d);
    }

    #[test]
    fn volterra_brownian_reduction_is_cumsum() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let mut dw = GridFunction::zeros(grid, 1);
        for i in 0..32 {
            dw.value_mut(i)[0] = (i as f64 * 0.37).sin();
        }
        let path = sample_fbm_volterra(&dw, 0.5, grid).unwrap();
        let mut acc = 0.0;
        for i in 0..32 {
            acc += dw.value(i)[0];
            assert!((path.value(i + 1)[0] - acc).abs() < 1e-12);
        }
        assert_eq!(path.value(0)[0], 0.0);
    }

    #[test]
    fn volterra_zero_increments_give_zero_path() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let dw = GridFunction::zeros(grid, 2);
        for h in [0.3, 0.7] {
            let path = sample_fbm_volterra(&dw, h, grid).unwrap();
            assert!(path.raw().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn volterra_variance_curve_matches_power_law() {
        // Monte Carlo: Var(B_t) should track t^{2H} at every node.
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let n_paths = 4000;
        for h in [0.3, 0.7] {
            let generator = NoiseGenerator::new(grid, 1, h, 0.8, 99).unwrap();
            let mut sums = vec![0.0; grid.node_count()];
            for p in 0..n_paths {
                let b = generator.bundle(p).unwrap();
                for i in 1..grid.node_count() {
                    sums[i] += b.b_h.value(i)[0].powi(2);
                }
            }
            for i in 1..grid.node_count() {
                let var = sums[i] / n_paths as f64;
                let want = grid.node(i).powf(2.0 * h);
                // relative MC error of a variance at 4000 paths ~ sqrt(2/N) = 2.2%
                assert!(
                    (var / want - 1.0).abs() < 0.08,
                    "H={h} node {i}: var {var} want {want}"
                );
            }
        }
    }

    #[test]
    fn volterra_sample_covariance_matches_r() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let h = 0.7;
        let n_paths = 6000;
        let generator = NoiseGenerator::new(grid, 1, h, 0.8, 5).unwrap();
        let (i, j) = (4usize, 8usize);
        let mut prod = Vec::with_capacity(n_paths);
        for p in 0..n_paths {
            let b = generator.bundle(p as u64).unwrap();
            prod.push(b.b_h.value(i)[0] * b.b_h.value(j)[0]);
        }
        let est = mean(&prod);
        let want = covariance_r(grid.node(i), grid.node(j), h).unwrap();
        let se = crate::grid::std_error(&prod);
        assert!(
            (est - want).abs() < 3.0 * se,
            "cov {est} want {want} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn cholesky_variance_matches_power_law() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        for h in [0.3, 0.5, 0.7] {
            let sampler = CholeskySampler::new(grid, h).unwrap();
            let n_paths = 4000;
            let mut sums = vec![0.0; grid.node_count()];
            for p in 0..n_paths {
                let path = sampler.path(RngSpec::new(123, p as u64));
                for i in 1..grid.node_count() {
                    sums[i] += path.value(i)[0].powi(2);
                }
            }
            for i in 1..grid.node_count() {
                let var = sums[i] / n_paths as f64;
                let want = grid.node(i).powf(2.0 * h);
                assert!(
                    (var / want - 1.0).abs() < 0.08,
                    "H={h} node {i}: var {var} want {want}"
                );
            }
        }
    }

    #[test]
    fn cholesky_brownian_increments_uncorrelated() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let sampler = CholeskySampler::new(grid, 0.5).unwrap();
        let n_paths = 6000;
        let mut prods = Vec::with_capacity(n_paths);
        for p in 0..n_paths {
            let path = sampler.path(RngSpec::new(42, p as u64));
            let d1 = path.value(2)[0] - path.value(1)[0];
            let d2 = path.value(6)[0] - path.value(5)[0];
            prods.push(d1 * d2);
        }
        let est = mean(&prods);
        let se = crate::grid::std_error(&prods);
        assert!(est.abs() < 3.0 * se, "corr {est} vs 3se {}", 3.0 * se);
    }

    #[test]
    fn volterra_vs_cholesky_two_sample_ks() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let n_paths = 4000;
        for h in [0.3, 0.7] {
            let generator = NoiseGenerator::new(grid, 1, h, 0.8, 2024).unwrap();
            let chol = CholeskySampler::new(grid, h).unwrap();
            let mut xs = Vec::with_capacity(n_paths);
            let mut ys = Vec::with_capacity(n_paths);
            for p in 0..n_paths {
                xs.push(generator.bundle(p as u64).unwrap().b_h.value(64)[0]);
                ys.push(chol.path(RngSpec::new(777, p as u64)).value(64)[0]);
            }
            let d = ks_statistic(&xs, &ys);
            let thr = ks_threshold_95(n_paths, n_paths);
            assert!(d < thr, "H={h}: KS {d} >= {thr}");
        }
    }

    #[test]
    fn independence_of_the_two_drivers() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let generator = NoiseGenerator::new(grid, 1, 0.3, 0.8, 31).unwrap();
        let n_paths = 4000;
        let mut prods = Vec::with_capacity(n_paths);
        for p in 0..n_paths {
            let b = generator.bundle(p as u64).unwrap();
            prods.push(b.b_h.value(16)[0] * b.b_tilde.value(16)[0]);
        }
        let corr = mean(&prods);
        assert!(
            corr.abs() < 3.0 / (n_paths as f64).sqrt(),
            "cross-correlation {corr}"
        );
    }

    #[test]
    fn stationary_increments_in_law() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let h = 0.7;
        let generator = NoiseGenerator::new(grid, 1, h, 0.8, 61).unwrap();
        let n_paths = 4000;
        let mut v1 = Vec::with_capacity(n_paths);
        let mut v2 = Vec::with_capacity(n_paths);
        for p in 0..n_paths {
            let b = generator.bundle(p as u64).unwrap();
            v1.push((b.b_h.value(4)[0] - b.b_h.value(0)[0]).powi(2));
            v2.push((b.b_h.value(14)[0] - b.b_h.value(10)[0]).powi(2));
        }
        let (m1, m2) = (mean(&v1), mean(&v2));
        let se = (crate::grid::std_error(&v1).powi(2) + crate::grid::std_error(&v2).powi(2)).sqrt();
        assert!(
            (m1 - m2).abs() < 3.0 * se,
            "Var over same lag differs: {m1} vs {m2} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn wiener_integral_identity_sigma_returns_path() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let generator = NoiseGenerator::new(grid, 2, 0.7, 0.8, 17).unwrap();
        let b = generator.bundle(0).unwrap();
        let sigma = GridFunction::from_values(
            grid,
            4,
            grid.nodes().flat_map(|_| [1.0, 0.0, 0.0, 1.0]).collect(),
        )
        .unwrap();
        let out = wiener_integral(&sigma, &b.b_h).unwrap();
        for i in 0..grid.node_count() {
            for k in 0..2 {
                assert!((out.value(i)[k] - b.b_h.value(i)[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wiener_integral_constant_scalar_isometry() {
        // sigma = c: second moment at t is c^2 t^{2H} within MC tolerance.
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let h = 0.3;
        let c = 0.8;
        let generator = NoiseGenerator::new(grid, 1, h, 0.8, 23).unwrap();
        let sigma = GridFunction::from_scalar_fn(grid, |_| c);
        let n_paths = 4000;
        let mut sq = Vec::with_capacity(n_paths);
        for p in 0..n_paths {
            let b = generator.bundle(p as u64).unwrap();
            let out = wiener_integral(&sigma, &b.b_h).unwrap();
            sq.push(out.value(16)[0].powi(2));
        }
        let est = mean(&sq);
        let want = c * c;
        let se = crate::grid::std_error(&sq);
        assert!((est - want).abs() < 3.0 * se, "{est} vs {want}");
    }

    #[test]
    fn wiener_integral_zero_sigma_is_zero() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let generator = NoiseGenerator::new(grid, 1, 0.7, 0.8, 29).unwrap();
        let b = generator.bundle(0).unwrap();
        let sigma = GridFunction::zeros(grid, 1);
        let out = wiener_integral(&sigma, &b.b_h).unwrap();
        assert!(out.raw().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bundles_are_bit_reproducible() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let g1 = NoiseGenerator::new(grid, 1, 0.3, 0.8, 1234).unwrap();
        let g2 = NoiseGenerator::new(grid, 1, 0.3, 0.8, 1234).unwrap();
        let a = g1.bundle(5).unwrap();
        let b = g2.bundle(5).unwrap();
        assert_eq!(a.b_h.raw(), b.b_h.raw());
        assert_eq!(a.dw.raw(), b.dw.raw());
        let sum = pairwise_sum(a.b_h.raw());
        assert!(sum.is_finite());
    }
}
