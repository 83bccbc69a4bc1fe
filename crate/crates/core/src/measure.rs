//! Empirical-measure algebra: Wasserstein distances (exact quantile coupling
//! in one dimension, exact optimal assignment above), a k-nearest-neighbor
//! relative-entropy estimator, and the finite-difference derivative of
//! measure functionals along pushforward perturbations.

use crate::error::{Error, Result};
use crate::grid::{mean, pairwise_sum};
use once_cell::sync::OnceCell;

/// Weighted point cloud in `R^d` representing a probability measure.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    mean: OnceCell<Vec<f64>>,
}

impl EmpiricalMeasure {
    /// Uniformly weighted cloud; `points` is node-major `n x dim`.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::Contract(format!(
                "point buffer of length {} is not a multiple of dim {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        Self::weighted(dim, points, vec![1.0 / n as f64; n])
    }

    pub fn weighted(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() * dim {
            return Err(Error::Contract("weights do not match point count".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Contract("points must be finite".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Contract("weights must be nonnegative".into()));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("weights sum to {total}, expected 1")));
        }
        Ok(EmpiricalMeasure {
            dim,
            points,
            weights,
            mean: OnceCell::new(),
        })
    }

    /// Cloud of scalar points.
    pub fn from_scalars(points: Vec<f64>) -> Result<Self> {
        Self::uniform(1, points)
    }

    pub fn dirac(point: &[f64]) -> Self {
        EmpiricalMeasure {
            dim: point.len(),
            points: point.to_vec(),
            weights: vec![1.0],
            mean: OnceCell::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn points_raw(&self) -> &[f64] {
        &self.points
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() < 1e-12 * w)
    }

    /// Barycenter, cached after the first call.
    pub fn mean(&self) -> &[f64] {
        self.mean.get_or_init(|| {
            let mut m = vec![0.0; self.dim];
            for i in 0..self.len() {
                let w = self.weights[i];
                for (k, mk) in m.iter_mut().enumerate() {
                    *mk += w * self.points[i * self.dim + k];
                }
            }
            m
        })
    }

    /// Pushforward by `x -> x + eps * phi(x)` over the same sample points.
    pub fn push_forward(&self, eps: f64, phi: impl Fn(&[f64]) -> Vec<f64>) -> EmpiricalMeasure {
        let mut points = Vec::with_capacity(self.points.len());
        for i in 0..self.len() {
            let x = self.point(i);
            let v = phi(x);
            debug_assert_eq!(v.len(), self.dim);
            for k in 0..self.dim {
                points.push(x[k] + eps * v[k]);
            }
        }
        EmpiricalMeasure {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
            mean: OnceCell::new(),
        }
    }

    /// Average of `f` over the cloud.
    pub fn expect(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let vals: Vec<f64> = (0..self.len())
            .map(|i| self.weights[i] * f(self.point(i)))
            .collect();
        pairwise_sum(&vals)
    }
}

const ASSIGNMENT_CAP: usize = 2048;

/// `L^p`-Wasserstein distance between empirical measures.
///
/// Dimension 1 uses the exact quantile coupling (general weights). Higher
/// dimensions require equal point counts with uniform weights and solve the
/// optimal assignment exactly; the cubic-time solver is capped at 2048
/// points.
pub fn wasserstein_p(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    if !(p >= 1.0) {
        return Err(Error::parameter("p", "order must be >= 1"));
    }
    if mu.dim() == 1 {
        return Ok(wasserstein_1d(mu, nu, p));
    }
    if mu.len() != nu.len() || !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::Contract(
            "d > 1 requires equal point counts with uniform weights (assignment formulation)".into(),
        ));
    }
    if mu.len() > ASSIGNMENT_CAP {
        return Err(Error::Capacity(format!(
            "assignment solver capped at {ASSIGNMENT_CAP} points, got {}",
            mu.len()
        )));
    }
    let n = mu.len();
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        let xi = mu.point(i);
        for j in 0..n {
            let yj = nu.point(j);
            let d2: f64 = xi
                .iter()
                .zip(yj)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            cost[i * n + j] = d2.sqrt().powf(p);
        }
    }
    let (_, total) = min_cost_assignment(n, &cost);
    Ok((total / n as f64).powf(1.0 / p))
}

/// Quantile coupling in one dimension for arbitrary weights.
fn wasserstein_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> f64 {
    let mut a: Vec<(f64, f64)> = (0..mu.len()).map(|i| (mu.point(i)[0], mu.weight(i))).collect();
    let mut b: Vec<(f64, f64)> = (0..nu.len()).map(|i| (nu.point(i)[0], nu.weight(i))).collect();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0usize, 0usize);
    let (mut wa, mut wb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    loop {
        let m = wa.min(wb);
        acc += m * (a[i].0 - b[j].0).abs().powf(p);
        wa -= m;
        wb -= m;
        if wa <= 1e-15 {
            i += 1;
            if i >= a.len() {
                break;
            }
            wa = a[i].1;
        }
        if wb <= 1e-15 {
            j += 1;
            if j >= b.len() {
                break;
            }
            wb = b[j].1;
        }
    }
    acc.powf(1.0 / p)
}

/// Exact minimum-cost assignment (Jonker–Volgenant shortest augmenting
/// paths, `O(n^3)`), returning the column assigned to each row and the total
/// cost.
pub fn min_cost_assignment(n: usize, cost: &[f64]) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // column -> assigned row (1-based; 0 = free)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
            total += cost[(p[j] - 1) * n + (j - 1)];
        }
    }
    (row_to_col, total)
}

/// Outcome of the k-NN divergence estimator.
#[derive(Debug, Clone, Copy)]
pub struct KnnDivergence {
    pub value: f64,
    /// Set when duplicate points forced a deterministic jitter.
    pub jittered: bool,
}

/// k-nearest-neighbor estimate of the relative entropy `Ent(P | Q)` from
/// samples of each law. Can go negative for close laws; that is estimator
/// noise, not an error.
pub fn relative_entropy_knn(
    p_samples: &EmpiricalMeasure,
    q_samples: &EmpiricalMeasure,
    k: usize,
) -> Result<KnnDivergence> {
    if p_samples.dim() != q_samples.dim() {
        return Err(Error::Contract("sample dimension mismatch".into()));
    }
    if k == 0 {
        return Err(Error::parameter("k", "neighbor count must be >= 1"));
    }
    let (n, m) = (p_samples.len(), q_samples.len());
    if n < 50 || m < 50 {
        return Err(Error::Contract(format!(
            "need at least 50 samples per law, got {n} and {m}"
        )));
    }
    if k >= n {
        return Err(Error::parameter("k", "neighbor count must be below sample size"));
    }
    let d = p_samples.dim();
    let mut xs = p_samples.points_raw().to_vec();
    let mut ys = q_samples.points_raw().to_vec();

    let mut jittered = false;
    for attempt in 0..2 {
        let rho = knn_distances(&xs, &xs, d, k, true);
        let nu = knn_distances(&xs, &ys, d, k, false);
        if rho.iter().all(|r| *r > 0.0) && nu.iter().all(|r| *r > 0.0) {
            let logs: Vec<f64> = rho
                .iter()
                .zip(&nu)
                .map(|(r, s)| (s / r).ln())
                .collect();
            let value = d as f64 * mean(&logs) + (m as f64 / (n as f64 - 1.0)).ln();
            return Ok(KnnDivergence { value, jittered });
        }
        if attempt == 0 {
            // Duplicate points beyond k: break ties with a deterministic,
            // index-seeded jitter far below the data scale.
            jittered = true;
            let scale = xs
                .iter()
                .chain(ys.iter())
                .fold(0.0f64, |a, b| a.max(b.abs()))
                .max(1e-12);
            for (i, x) in xs.iter_mut().enumerate() {
                *x += 1e-9 * scale * (((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5);
            }
            for (i, y) in ys.iter_mut().enumerate() {
                *y += 1e-9 * scale * (((i * 1597334677) % 1000) as f64 / 1000.0 - 0.5);
            }
        }
    }
    Err(Error::Numeric(
        "duplicate samples persisted after jitter; cannot form k-NN distances".into(),
    ))
}

/// Distance from each query point to its k-th nearest neighbor in `data`
/// (excluding the query itself when `exclude_self`).
fn knn_distances(queries: &[f64], data: &[f64], d: usize, k: usize, exclude_self: bool) -> Vec<f64> {
    use rayon::prelude::*;
    let nq = queries.len() / d;
    let nd = data.len() / d;
    (0..nq)
        .into_par_iter()
        .map(|i| {
            let q = &queries[i * d..(i + 1) * d];
            // largest-of-k heap kept as a sorted insertion buffer
            let mut best = vec![f64::INFINITY; k];
            for j in 0..nd {
                if exclude_self && i == j {
                    continue;
                }
                let p = &data[j * d..(j + 1) * d];
                let dist2: f64 = q
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                let dist = dist2.sqrt();
                if dist < best[k - 1] {
                    let mut pos = k - 1;
                    while pos > 0 && best[pos - 1] > dist {
                        best[pos] = best[pos - 1];
                        pos -= 1;
                    }
                    best[pos] = dist;
                }
            }
            best[k - 1]
        })
        .collect()
}

/// Diagnostics of [`lions_derivative_fd`].
#[derive(Debug, Clone)]
pub struct LionsFdEstimate {
    /// Extrapolated derivative value.
    pub value: f64,
    /// `(eps, difference quotient)` pairs, in the order supplied.
    pub quotients: Vec<(f64, f64)>,
    /// False when the quotient increments do not shrink monotonically —
    /// the extrapolation is then unreliable.
    pub monotone: bool,
}

/// Finite-difference derivative of a measure functional along the
/// pushforward direction `phi`, using common sample points for every
/// epsilon and Richardson extrapolation of the two smallest.
pub fn lions_derivative_fd(
    functional: impl Fn(&EmpiricalMeasure) -> f64,
    xi_samples: &EmpiricalMeasure,
    phi: impl Fn(&[f64]) -> Vec<f64>,
    eps_list: &[f64],
) -> Result<LionsFdEstimate> {
    if eps_list.len() < 2 {
        return Err(Error::parameter("eps_list", "need at least 2 epsilons"));
    }
    if eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::parameter("eps_list", "epsilons must be positive"));
    }
    let base = functional(xi_samples);
    let mut quotients: Vec<(f64, f64)> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let perturbed = xi_samples.push_forward(eps, &phi);
        quotients.push((eps, (functional(&perturbed) - base) / eps));
    }
    let mut sorted = quotients.clone();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (e1, q1) = sorted[sorted.len() - 2];
    let (e2, q2) = sorted[sorted.len() - 1];
    // linear-in-eps model through the two smallest epsilons
    let value = (e1 * q2 - e2 * q1) / (e1 - e2);
    let mut monotone = true;
    for w in sorted.windows(2) {
        let (d0, d1) = ((w[0].1 - value).abs(), (w[1].1 - value).abs());
        if d1 > d0 * 1.1 + 1e-12 {
            monotone = false;
        }
    }
    Ok(LionsFdEstimate {
        value,
        quotients,
        monotone,
    })
}

/// Writes a measure as CSV rows `weight,x1,..,xd`.
pub fn measure_to_csv(m: &EmpiricalMeasure) -> String {
    let mut out = String::new();
    out.push_str("weight");
    for k in 0..m.dim() {
        out.push_str(&format!(",x{}", k + 1));
    }
    out.push('\n');
    for i in 0..m.len() {
        out.push_str(&format!("{}", m.weight(i)));
        for v in m.point(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

const CSV_MAX_ROWS: usize = 1 << 22;

/// Parses the CSV layout produced by [`measure_to_csv`]. Strict: a header
/// `weight,x1,..,xd`, finite numbers, weights summing to one.
pub fn measure_from_csv(text: &str) -> Result<EmpiricalMeasure> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty file".into()))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 2 || cols[0] != "weight" {
        return Err(Error::Parse("header must be weight,x1,..,xd".into()));
    }
    for (k, c) in cols[1..].iter().enumerate() {
        if *c != format!("x{}", k + 1) {
            return Err(Error::Parse(format!("unexpected column name `{c}`")));
        }
    }
    let dim = cols.len() - 1;
    let mut weights = Vec::new();
    let mut points = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if lineno >= CSV_MAX_ROWS {
            return Err(Error::Capacity("too many CSV rows".into()));
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                lineno + 2,
                fields.len(),
                dim + 1
            )));
        }
        let mut nums = fields.iter().map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))
        });
        weights.push(nums.next().unwrap()?);
        for v in nums {
            points.push(v?);
        }
    }
    if weights.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    EmpiricalMeasure::weighted(dim, points, weights)
}
