//! Sampled functions on rectilinear grids and discrete Legendre transforms.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Uniform rectilinear grid `Π [lo_i, hi_i]` with `n_i ≥ 2` nodes per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != n.len() {
            return input("grid axes must have matching, non-zero lengths");
        }
        for i in 0..lo.len() {
            if !(lo[i] < hi[i]) || n[i] < 2 || !lo[i].is_finite() || !hi[i].is_finite() {
                return input(format!("grid axis {i} must satisfy lo < hi and n ≥ 2"));
            }
        }
        Ok(Self { lo, hi, n })
    }

    /// `[−r, r]^dim` with `n` nodes per axis.
    pub fn cube(dim: usize, r: f64, n: usize) -> Result<Self> {
        Self::new(vec![-r; dim], vec![r; dim], vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.n[axis] - 1) as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).fold(0.0, f64::max)
    }

    /// Multi-index of a flat node index; axis 0 varies fastest.
    pub fn index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for &n in &self.n {
            idx.push(flat % n);
            flat /= n;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for i in (0..self.dim()).rev() {
            f = f * self.n[i] + idx[i];
        }
        f
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.index(flat)
            .iter()
            .enumerate()
            .map(|(i, &k)| self.lo[i] + k as f64 * self.spacing(i))
            .collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    pub fn on_boundary(&self, flat: usize) -> bool {
        self.index(flat)
            .iter()
            .zip(&self.n)
            .any(|(&k, &n)| k == 0 || k == n - 1)
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] - 1e-12 && v <= self.hi[i] + 1e-12)
    }
}

/// Values of a function at the nodes of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return input(format!("{} values for a grid of {} nodes", values.len(), grid.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return input("grid function has non-finite values");
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.node(k))).collect();
        Self { grid, values }
    }

    /// Piecewise-linear interpolation on the Kuhn triangulation of each cell.
    /// Points outside the grid are clamped to it.
    pub fn interpolate(&self, q: &[f64]) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for i in 0..d {
            let h = g.spacing(i);
            let u = ((q[i] - g.lo[i]) / h).clamp(0.0, (g.n[i] - 1) as f64);
            let k = (u.floor() as usize).min(g.n[i] - 2);
            base[i] = k;
            frac[i] = u - k as f64;
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(a.cmp(&b)));
        // Vertices of the Kuhn simplex in order of decreasing fractional part.
        let mut idx = base;
        let mut prev = self.values[g.flat(&idx)];
        let mut last = 1.0;
        let mut v = 0.0;
        for &axis in &order {
            v += (last - frac[axis]) * prev;
            idx[axis] += 1;
            prev = self.values[g.flat(&idx)];
            last = frac[axis];
        }
        v + last * prev
    }
}

/// `sup_{p ∈ grid} p·q − f(p)`; fails if the maximizer sits on the boundary.
pub fn legendre_numeric(f: &GridFunction, q: &[f64]) -> Result<f64> {
    if q.len() != f.grid.dim() {
        return input("slope dimension does not match the grid");
    }
    let (k, v) = argmax_dual(f, q);
    if f.grid.on_boundary(k) {
        return Err(Error::Range(format!(
            "maximizer for q={q:?} lies on the grid boundary; enlarge the grid"
        )));
    }
    Ok(v)
}

fn argmax_dual(f: &GridFunction, q: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..f.grid.len() {
        let p = f.grid.node(k);
        let v: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() - f.values[k];
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// Discrete conjugate of `f` evaluated on the nodes of `dual`, with a flag per
/// node telling whether the maximizer lies on the boundary of `f`'s grid.
pub fn conjugate_on(f: &GridFunction, dual: &Grid) -> (GridFunction, Vec<bool>) {
    let nodes = f.grid.nodes();
    let mut values = Vec::with_capacity(dual.len());
    let mut boundary = Vec::with_capacity(dual.len());
    for k in 0..dual.len() {
        let p = dual.node(k);
        let mut best = (0, f64::NEG_INFINITY);
        for (j, q) in nodes.iter().enumerate() {
            let v: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() - f.values[j];
            if v > best.1 {
                best = (j, v);
            }
        }
        values.push(best.1);
        boundary.push(f.grid.on_boundary(best.0));
    }
    (GridFunction { grid: dual.clone(), values }, boundary)
}

/// Largest difference quotient between axis neighbours.
pub fn max_slope(f: &GridFunction) -> f64 {
    let g = &f.grid;
    let mut s: f64 = 0.0;
    for k in 0..g.len() {
        let idx = g.index(k);
        for axis in 0..g.dim() {
            if idx[axis] + 1 < g.n[axis] {
                let mut j = idx.clone();
                j[axis] += 1;
                let d = (f.values[g.flat(&j)] - f.values[k]).abs() / g.spacing(axis);
                s = s.max(d);
            }
        }
    }
    s
}

/// Slope grid used for convexification: covers every neighbour slope with
/// margin at a resolution of `per_axis` nodes.
pub fn slope_grid(f: &GridFunction, per_axis: usize) -> Grid {
    let s = 2.0 * max_slope(f) + 1.0;
    Grid::cube(f.grid.dim(), s, per_axis).expect("valid slope grid")
}

/// Lower convex envelope on the nodes via a double discrete transform.
pub fn convexify(f: &GridFunction, per_axis: usize) -> GridFunction {
    convexify_with(f, &slope_grid(f, per_axis))
}

/// As [`convexify`] with an explicit slope grid.
pub fn convexify_with(f: &GridFunction, dual: &Grid) -> GridFunction {
    let (fs, _) = conjugate_on(f, dual);
    let (fss, _) = conjugate_on(&fs, &f.grid);
    // Exact idempotence on convex data up to rounding: never exceed f.
    let values = fss
        .values
        .iter()
        .zip(&f.values)
        .map(|(a, b)| a.min(*b))
        .collect();
    GridFunction { grid: f.grid.clone(), values }
}

/// Error bound for a round trip through a dual grid: `√m · h_dual · h_primal`.
pub fn round_trip_bound(primal: &Grid, dual: &Grid) -> f64 {
    (primal.dim() as f64).sqrt() * dual.max_spacing() * primal.max_spacing()
}

/// Fraction of sampled midpoint triples violating convexity of the
/// interpolant by more than `tol`.
pub fn interpolant_midpoint_violations(f: &GridFunction, samples: usize, seed: u64, tol: f64) -> usize {
    let mut rng = crate::rng::Stream::new(seed, "interp-convex", 0);
    let g = &f.grid;
    let mut bad = 0;
    for _ in 0..samples {
        let a: Vec<f64> = (0..g.dim()).map(|i| rng.range(g.lo[i], g.hi[i])).collect();
        let b: Vec<f64> = (0..g.dim()).map(|i| rng.range(g.lo[i], g.hi[i])).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        if f.interpolate(&mid) > 0.5 * (f.interpolate(&a) + f.interpolate(&b)) + tol {
            bad += 1;
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> GridFunction {
        GridFunction::sample(Grid::cube(2, 5.0, 41).unwrap(), |p| 0.5 * (p[0] * p[0] + p[1] * p[1]))
    }

    #[test]
    fn quadratic_dual() {
        let v = legendre_numeric(&quad(), &[1.0, 1.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norm_dual_is_indicator() {
        let f = GridFunction::sample(Grid::cube(2, 5.0, 41).unwrap(), |p| (p[0] * p[0] + p[1] * p[1]).sqrt());
        assert!(legendre_numeric(&f, &[0.3, 0.4]).unwrap().abs() < 1e-12);
        assert!(matches!(legendre_numeric(&f, &[1.0, 0.5]), Err(Error::Range(_))));
    }

    #[test]
    fn interpolation_reproduces_affine() {
        let f = GridFunction::sample(Grid::cube(2, 2.0, 5).unwrap(), |p| 1.0 + 2.0 * p[0] - 0.5 * p[1]);
        for q in [[0.3, -0.7], [1.9, 1.2], [-2.0, 2.0]] {
            assert!((f.interpolate(&q) - (1.0 + 2.0 * q[0] - 0.5 * q[1])).abs() < 1e-12);
        }
        let g = GridFunction::sample(Grid::cube(3, 1.0, 3).unwrap(), |p| p[0] - p[1] + 3.0 * p[2]);
        let q = [0.1, 0.7, -0.4];
        assert!((g.interpolate(&q) - (0.1 - 0.7 - 1.2)).abs() < 1e-12);
    }

    #[test]
    fn convexify_is_idempotent_and_below() {
        let mut f = GridFunction::sample(Grid::cube(2, 2.0, 9).unwrap(), |p| 0.5 * (p[0] * p[0] + p[1] * p[1]));
        f.values[40] += 0.3;
        f.values[10] -= 0.2;
        let dual = slope_grid(&f, 65);
        let c = convexify_with(&f, &dual);
        assert!(c.values.iter().zip(&f.values).all(|(a, b)| a <= b));
        let cc = convexify_with(&c, &dual);
        let d = c.values.iter().zip(&cc.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }
}
