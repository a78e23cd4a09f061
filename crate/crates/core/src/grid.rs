//! Uniform Cartesian grids, node-valued fields and the distance factor.
//!
//! Nodes are addressed either by a multi-index `[i, j(, k)]` or by a linear
//! index. The linear index is last-axis-fastest: in 2D with counts `(n1, n2)`
//! node `(i, j)` lives at `i * n2 + j`, in 3D `(i, j, k)` at
//! `(i * n2 + j) * n3 + k`. Physical coordinates are `origin + h * index`.

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Maximum supported dimension.
pub const MAX_DIM: usize = 3;

/// A uniform Cartesian mesh with equal spacing on every axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularGrid<T> {
    dim: usize,
    counts: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    h: T,
    origin: [T; MAX_DIM],
}

impl<T: Real> RegularGrid<T> {
    /// Builds a grid from per-axis node counts, spacing and origin.
    ///
    /// `counts` and `origin` must both have length 2 or 3, every count must be
    /// at least 3 and `h` must be positive and finite.
    pub fn new(counts: &[usize], h: T, origin: &[T]) -> Result<Self> {
        let dim = counts.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return domain(format!("grid dimension must be 2 or 3, got {dim}"));
        }
        if origin.len() != dim {
            return domain(format!(
                "origin has {} components for a {dim}D grid",
                origin.len()
            ));
        }
        if let Some(&n) = counts.iter().find(|&&n| n < 3) {
            return domain(format!("every axis needs at least 3 nodes, got {n}"));
        }
        if !(h > T::zero()) || !h.is_finite() {
            return domain(format!("grid spacing must be positive, got {h}"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return domain("grid origin must be finite");
        }
        let mut c = [1usize; MAX_DIM];
        let mut o = [T::zero(); MAX_DIM];
        c[..dim].copy_from_slice(counts);
        o[..dim].copy_from_slice(origin);
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1usize;
        for axis in (0..dim).rev() {
            strides[axis] = s;
            s = s
                .checked_mul(c[axis])
                .ok_or_else(|| crate::EikonalError::Domain("grid too large".into()))?;
        }
        Ok(Self {
            dim,
            counts: c,
            strides,
            h,
            origin: o,
        })
    }

    /// Grid covering `[origin, origin + extent]` on each axis with spacing `h`.
    ///
    /// Each extent must be an integer multiple of `h` (up to rounding).
    pub fn from_extent(extent: &[T], h: T, origin: &[T]) -> Result<Self> {
        let mut counts = Vec::with_capacity(extent.len());
        for &len in extent {
            let cells = (len / h).round();
            let err = (cells * h - len).abs();
            if err > T::lit(1e-9) * (T::one() + len.abs()) {
                return domain(format!("extent {len} is not a multiple of h = {h}"));
            }
            let cells = cells
                .to_usize()
                .ok_or_else(|| crate::EikonalError::Domain("invalid extent".into()))?;
            counts.push(cells + 1);
        }
        Self::new(&counts, h, origin)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    #[inline]
    pub fn strides(&self) -> &[usize] {
        &self.strides[..self.dim]
    }

    #[inline]
    pub fn spacing(&self) -> T {
        self.h
    }

    #[inline]
    pub fn origin(&self) -> &[T] {
        &self.origin[..self.dim]
    }

    /// Total number of nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.counts[..self.dim].iter().product()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of a multi-index, or `None` when it lies outside the grid.
    pub fn linearize(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.dim {
            return None;
        }
        let mut k = 0;
        for axis in 0..self.dim {
            if index[axis] >= self.counts[axis] {
                return None;
            }
            k += index[axis] * self.strides[axis];
        }
        Some(k)
    }

    /// Multi-index of a linear index. Unused trailing components are zero.
    #[inline]
    pub fn delinearize(&self, mut k: usize) -> [usize; MAX_DIM] {
        debug_assert!(k < self.len());
        let mut idx = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            idx[axis] = k / self.strides[axis];
            k %= self.strides[axis];
        }
        idx
    }

    /// Physical coordinate of a node given by multi-index.
    #[inline]
    pub fn coord_of_index(&self, idx: &[usize; MAX_DIM]) -> [T; MAX_DIM] {
        let mut x = [T::zero(); MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = self.origin[axis] + self.h * T::from_usize_lossy(idx[axis]);
        }
        x
    }

    /// Physical coordinate of a node given by linear index.
    #[inline]
    pub fn coord(&self, k: usize) -> [T; MAX_DIM] {
        self.coord_of_index(&self.delinearize(k))
    }

    /// Multi-index of the node located exactly at `point`.
    ///
    /// Fails when the point is outside the grid or not on a node.
    pub fn index_of_point(&self, point: &[T]) -> Result<[usize; MAX_DIM]> {
        if point.len() != self.dim {
            return domain(format!(
                "point has {} coordinates for a {}D grid",
                point.len(),
                self.dim
            ));
        }
        let mut idx = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            let t = (point[axis] - self.origin[axis]) / self.h;
            let r = t.round();
            if (t - r).abs() > T::lit(1e-6) || r < T::zero() {
                return domain(format!("point {:?} is not a grid node", point));
            }
            let i = r.to_usize().unwrap_or(usize::MAX);
            if i >= self.counts[axis] {
                return domain(format!("point {:?} lies outside the grid", point));
            }
            idx[axis] = i;
        }
        Ok(idx)
    }

    /// Multi-index of the node obtained by flooring `point` onto the grid,
    /// clamped to the grid bounds.
    pub fn floor_point(&self, point: &[T]) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            let t = ((point[axis] - self.origin[axis]) / self.h + T::lit(1e-9)).floor();
            let i = t.max(T::zero()).to_usize().unwrap_or(0);
            idx[axis] = i.min(self.counts[axis] - 1);
        }
        idx
    }
}

/// A real value attached to every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    grid: RegularGrid<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: RegularGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: RegularGrid<T>, value: T) -> Self {
        Self {
            values: vec![value; grid.len()],
            grid,
        }
    }

    pub fn zeros(grid: RegularGrid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Samples `f` at the physical coordinate of every node.
    pub fn from_fn(grid: RegularGrid<T>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let x = grid.coord(k);
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &RegularGrid<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return domain("fields are defined on different grids");
        }
        Ok(())
    }
}

impl<T> std::ops::Index<usize> for ScalarField<T> {
    type Output = T;
    #[inline]
    fn index(&self, k: usize) -> &T {
        &self.values[k]
    }
}

impl<T> std::ops::IndexMut<usize> for ScalarField<T> {
    #[inline]
    fn index_mut(&mut self, k: usize) -> &mut T {
        &mut self.values[k]
    }
}

/// The point source: a grid node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SourceSpec {
    pub index: [usize; MAX_DIM],
}

impl SourceSpec {
    /// Source at a multi-index (2 or 3 components).
    pub fn new(index: &[usize]) -> Self {
        let mut idx = [0usize; MAX_DIM];
        idx[..index.len()].copy_from_slice(index);
        Self { index: idx }
    }

    /// Source at the grid node located exactly at `point`.
    pub fn at_point<T: Real>(grid: &RegularGrid<T>, point: &[T]) -> Result<Self> {
        Ok(Self {
            index: grid.index_of_point(point)?,
        })
    }

    /// Source at a linear node index.
    pub fn at_linear<T: Real>(grid: &RegularGrid<T>, k: usize) -> Result<Self> {
        if k >= grid.len() {
            return domain(format!("node {k} is outside the grid"));
        }
        Ok(Self {
            index: grid.delinearize(k),
        })
    }

    /// Linear index of the source on `grid`, failing when it is off-grid.
    pub fn linear<T: Real>(&self, grid: &RegularGrid<T>) -> Result<usize> {
        if self.index[grid.dim()..].iter().any(|&i| i != 0) {
            return domain(format!("source {:?} has too many components", self.index));
        }
        grid.linearize(&self.index[..grid.dim()])
            .ok_or_else(|| crate::EikonalError::Domain(format!("source {:?} is off-grid", self.index)))
    }
}

/// The distance factor `tau0 = |x - x0|` and its analytic unit gradient.
#[derive(Clone, Debug)]
pub struct DistanceFactor<T> {
    pub tau0: ScalarField<T>,
    /// One field per axis: `(x - x0) / |x - x0|`, and the first unit vector at the source.
    pub grad: Vec<ScalarField<T>>,
    pub source: SourceSpec,
}

impl<T: Real> DistanceFactor<T> {
    #[inline]
    pub fn grid(&self) -> &RegularGrid<T> {
        self.tau0.grid()
    }
}

/// Builds `tau0` and its gradient for a point source.
///
/// The gradient is undefined at the source itself; it is set to the first
/// unit vector there so that `|grad tau0| = 1` holds on every node.
pub fn build_distance_factor<T: Real>(
    grid: &RegularGrid<T>,
    src: &SourceSpec,
) -> Result<DistanceFactor<T>> {
    let s = src.linear(grid)?;
    let dim = grid.dim();
    let x0 = grid.coord(s);
    let n = grid.len();
    let mut tau0 = Vec::with_capacity(n);
    let mut grad: Vec<Vec<T>> = (0..dim).map(|_| Vec::with_capacity(n)).collect();
    for k in 0..n {
        let x = grid.coord(k);
        let mut d = [T::zero(); MAX_DIM];
        let mut r2 = T::zero();
        for axis in 0..dim {
            d[axis] = x[axis] - x0[axis];
            r2 += d[axis] * d[axis];
        }
        let r = r2.sqrt();
        tau0.push(r);
        for axis in 0..dim {
            let g = if k == s {
                if axis == 0 {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                d[axis] / r
            };
            grad[axis].push(g);
        }
    }
    Ok(DistanceFactor {
        tau0: ScalarField::new(*grid, tau0)?,
        grad: grad
            .into_iter()
            .map(|g| ScalarField::new(*grid, g))
            .collect::<Result<_>>()?,
        source: *src,
    })
}

/// Maximum absolute difference between two fields on the same grid.
pub fn linf_error<T: Real>(approx: &ScalarField<T>, exact: &ScalarField<T>) -> Result<T> {
    approx.check_same_grid(exact)?;
    Ok(approx
        .values()
        .iter()
        .zip(exact.values())
        .fold(T::zero(), |acc, (&a, &e)| acc.max((a - e).abs())))
}

/// Euclidean norm of the difference divided by the square root of the node count.
pub fn mean_l2_error<T: Real>(approx: &ScalarField<T>, exact: &ScalarField<T>) -> Result<T> {
    approx.check_same_grid(exact)?;
    let sum: T = approx
        .values()
        .iter()
        .zip(exact.values())
        .map(|(&a, &e)| (a - e) * (a - e))
        .sum();
    Ok((sum / T::from_usize_lossy(approx.values().len())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid2(n1: usize, n2: usize) -> RegularGrid<f64> {
        RegularGrid::new(&[n1, n2], 1.0, &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(RegularGrid::<f64>::new(&[2, 5], 1.0, &[0.0, 0.0]).is_err());
        assert!(RegularGrid::<f64>::new(&[5, 5], 0.0, &[0.0, 0.0]).is_err());
        assert!(RegularGrid::<f64>::new(&[5], 1.0, &[0.0]).is_err());
        assert!(RegularGrid::<f64>::new(&[5, 5], 1.0, &[0.0]).is_err());
    }

    #[test]
    fn linear_index_is_last_axis_fastest() {
        let g = grid2(4, 5);
        assert_eq!(g.linearize(&[0, 1]), Some(1));
        assert_eq!(g.linearize(&[1, 0]), Some(5));
        assert_eq!(g.linearize(&[4, 0]), None);
        let g3 = RegularGrid::<f64>::new(&[3, 4, 5], 0.5, &[0.0; 3]).unwrap();
        assert_eq!(g3.linearize(&[1, 2, 3]), Some((4 + 2) * 5 + 3));
    }

    #[test]
    fn from_extent_counts_nodes() {
        let g = RegularGrid::<f64>::from_extent(&[4.0, 8.0], 1.0 / 40.0, &[0.0, 0.0]).unwrap();
        assert_eq!(g.counts(), &[161, 321]);
        let g = RegularGrid::<f64>::from_extent(&[0.8, 1.6, 1.6], 0.05, &[0.0; 3]).unwrap();
        assert_eq!(g.counts(), &[17, 33, 33]);
        assert!(RegularGrid::<f64>::from_extent(&[1.0, 1.05], 0.1, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn distance_factor_examples() {
        let g = grid2(5, 5);
        let src = SourceSpec::new(&[2, 2]);
        let df = build_distance_factor(&g, &src).unwrap();
        let s = g.linearize(&[2, 2]).unwrap();
        assert_eq!(df.tau0[s], 0.0);
        assert_eq!((df.grad[0][s], df.grad[1][s]), (1.0, 0.0));
        let k = g.linearize(&[3, 2]).unwrap();
        assert_eq!(df.tau0[k], 1.0);
        assert_eq!((df.grad[0][k], df.grad[1][k]), (1.0, 0.0));
        let k = g.linearize(&[3, 3]).unwrap();
        assert!((df.tau0[k] - 2f64.sqrt()).abs() < 1e-15);
        assert!((df.grad[0][k] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((df.grad[1][k] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn off_grid_source_is_rejected() {
        let g = grid2(5, 5);
        assert!(build_distance_factor(&g, &SourceSpec::new(&[5, 0])).is_err());
        assert!(SourceSpec::at_point(&g, &[0.5, 1.0]).is_err());
        assert_eq!(
            SourceSpec::at_point(&g, &[2.0, 1.0]).unwrap(),
            SourceSpec::new(&[2, 1])
        );
    }

    #[test]
    fn error_norm_examples() {
        let g = grid2(3, 4);
        let z = ScalarField::zeros(g);
        assert_eq!(linf_error(&z, &z).unwrap(), 0.0);
        assert_eq!(mean_l2_error(&z, &z).unwrap(), 0.0);
        let c = ScalarField::constant(g, -0.25);
        assert_eq!(linf_error(&c, &z).unwrap(), 0.25);
        assert!((mean_l2_error(&c, &z).unwrap() - 0.25).abs() < 1e-16);
        let mut e = ScalarField::zeros(g);
        e[7] = 3.0;
        assert_eq!(linf_error(&e, &z).unwrap(), 3.0);
        assert!((mean_l2_error(&e, &z).unwrap() - 3.0 / 12f64.sqrt()).abs() < 1e-15);
        let other = ScalarField::zeros(grid2(4, 3));
        assert!(linf_error(&z, &other).is_err());
        assert!(mean_l2_error(&z, &other).is_err());
    }

    proptest! {
        #[test]
        fn index_bijection(n1 in 3usize..9, n2 in 3usize..9, n3 in 3usize..9, pick in 0usize..10_000) {
            let g = RegularGrid::<f64>::new(&[n1, n2, n3], 0.1, &[0.0; 3]).unwrap();
            let k = pick % g.len();
            let idx = g.delinearize(k);
            prop_assert_eq!(g.linearize(&idx), Some(k));
        }

        #[test]
        fn distance_factor_unit_gradient(
            n1 in 3usize..12, n2 in 3usize..12, n3 in 3usize..7,
            s in 0usize..10_000, h in 0.01f64..2.0,
        ) {
            let g = RegularGrid::new(&[n1, n2, n3], h, &[-0.3, 0.7, 1.1]).unwrap();
            let src = SourceSpec::at_linear(&g, s % g.len()).unwrap();
            let df = build_distance_factor(&g, &src).unwrap();
            let x0 = g.coord(s % g.len());
            for k in 0..g.len() {
                let x = g.coord(k);
                let r = ((x[0]-x0[0]).powi(2) + (x[1]-x0[1]).powi(2) + (x[2]-x0[2]).powi(2)).sqrt();
                prop_assert!((df.tau0[k] - r).abs() <= 1e-14 * (1.0 + r));
                let gn = (df.grad[0][k].powi(2) + df.grad[1][k].powi(2) + df.grad[2][k].powi(2)).sqrt();
                prop_assert!((gn - 1.0).abs() <= 1e-14);
            }
        }

        #[test]
        fn mean_l2_never_exceeds_linf(vals in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let g = grid2(3, 4);
            let a = ScalarField::new(g, vals).unwrap();
            let z = ScalarField::zeros(g);
            prop_assert!(mean_l2_error(&a, &z).unwrap() <= linf_error(&a, &z).unwrap() * (1.0 + 1e-15));
        }
    }
}
