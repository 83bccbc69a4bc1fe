use crate::error::{Error, Result};

/// Uniform partition of `[0, t_end]` into `steps` cells (`steps + 1` nodes).
///
/// Non-uniform grids are deliberately unsupported: every quadrature in this
/// crate relies on closed-form singular moments that are only cheap on a
/// uniform mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::parameter("t_end", "must be finite and positive"));
        }
        if steps == 0 {
            return Err(Error::parameter("steps", "must be at least 1"));
        }
        Ok(TimeGrid { t_end, steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn node_count(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        self.t_end * (i as f64) / (self.steps as f64)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.node_count()).map(move |i| self.node(i))
    }

    /// Index of the node equal to `t`, or an error when `t` is not a node.
    /// There is no interpolation anywhere in the crate.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let pos = t / self.dt();
        let i = pos.round();
        if i < 0.0 || i > self.steps as f64 || (pos - i).abs() > 1e-9 * (self.steps as f64).max(1.0)
        {
            return Err(Error::Contract(format!(
                "t = {t} is not a node of the grid (dt = {})",
                self.dt()
            )));
        }
        Ok(i as usize)
    }

    /// Grid over `[0, node(i0)]` sharing the node spacing.
    pub fn prefix(&self, i0: usize) -> Result<TimeGrid> {
        if i0 == 0 || i0 > self.steps {
            return Err(Error::Contract(format!(
                "prefix index {i0} out of range 1..={}",
                self.steps
            )));
        }
        TimeGrid::new(self.node(i0), i0)
    }
}

/// Values of a function on the nodes of a [`TimeGrid`], `dim` components per
/// node, stored node-major. Matrix-valued integrands use `dim = rows * cols`
/// in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        GridFunction {
            grid,
            dim,
            values: vec![0.0; grid.node_count() * dim],
        }
    }

    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() * dim {
            return Err(Error::Contract(format!(
                "value buffer has length {}, expected {} nodes x {} components",
                values.len(),
                grid.node_count(),
                dim
            )));
        }
        Ok(GridFunction { grid, dim, values })
    }

    /// Scalar function sampled at the nodes.
    pub fn from_scalar_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        GridFunction {
            grid,
            dim: 1,
            values,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    pub fn value_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.values[node * self.dim..(node + 1) * self.dim]
    }

    /// Single component as a contiguous vector over the nodes.
    pub fn component(&self, k: usize) -> Vec<f64> {
        assert!(k < self.dim);
        (0..self.node_count())
            .map(|i| self.values[i * self.dim + k])
            .collect()
    }

    pub fn set_component(&mut self, k: usize, vals: &[f64]) {
        assert!(k < self.dim);
        assert_eq!(vals.len(), self.node_count());
        for (i, v) in vals.iter().enumerate() {
            self.values[i * self.dim + k] = *v;
        }
    }

    pub fn scalar(&self, node: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.values[node]
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what} contains non-finite values")))
        }
    }

    /// Restriction to the first `i0 + 1` nodes, as a function on the prefix grid.
    pub fn truncate(&self, i0: usize) -> Result<GridFunction> {
        let grid = self.grid.prefix(i0)?;
        let values = self.values[..(i0 + 1) * self.dim].to_vec();
        Ok(GridFunction {
            grid,
            dim: self.dim,
            values,
        })
    }

    /// Discrete L2 norm over nodes (all components).
    pub fn l2_norm(&self) -> f64 {
        let dt = self.grid.dt();
        (self.values.iter().map(|v| v * v).sum::<f64>() * dt).sqrt()
    }
}

/// Deterministic pairwise-tree summation. Used for every reduction over paths
/// so results do not depend on thread count or reduction order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Sample standard error of the mean.
pub fn std_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (pairwise_sum(&sq) / ((n - 1) as f64)).sqrt() / (n as f64).sqrt()
}

/// Least-squares slope of `ys` against `xs`.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let xm = mean(xs);
    let ym = mean(ys);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(2.0, 4).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.dt(), 0.5);
        assert_eq!(g.node(4), 2.0);
        assert_eq!(g.index_of(1.0).unwrap(), 2);
        assert!(g.index_of(0.7).is_err());
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(-1.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 4).is_err());
    }

    #[test]
    fn truncate_keeps_prefix_values() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let f = GridFunction::from_scalar_fn(g, |t| t * t);
        let h = f.truncate(5).unwrap();
        assert_eq!(h.node_count(), 6);
        assert!((h.grid().t_end() - 0.5).abs() < 1e-15);
        assert_eq!(h.scalar(5), 0.25);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64) * 0.1).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }
}
