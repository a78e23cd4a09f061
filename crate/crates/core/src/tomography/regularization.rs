//! Smoothness penalty `R(u) = 1/2 (u - u_ref)^T L (u - u_ref)` with `L` the
//! negative 5-point (7-point in 3D) Laplacian under Neumann boundary
//! conditions, so that `L` is positive semi-definite and constants lie in its
//! null space.

use crate::error::{domain, Result};
use crate::grid::{RegularGrid, ScalarField};
use crate::scalar::Real;

/// `out = L u`.
pub fn apply_laplacian<T: Real>(grid: &RegularGrid<T>, u: &[T], out: &mut [T]) {
    assert_eq!(u.len(), grid.len());
    assert_eq!(out.len(), grid.len());
    let inv_h2 = T::one() / (grid.spacing() * grid.spacing());
    let dim = grid.dim();
    let counts = grid.counts();
    let strides = grid.strides();
    for (k, o) in out.iter_mut().enumerate() {
        let idx = grid.delinearize(k);
        let mut s = T::zero();
        for axis in 0..dim {
            let st = strides[axis];
            if idx[axis] > 0 {
                s += u[k] - u[k - st];
            }
            if idx[axis] + 1 < counts[axis] {
                s += u[k] - u[k + st];
            }
        }
        *o = s * inv_h2;
    }
}

/// `R(u)`; equals `1/2 sum over grid edges (u_i - u_j)^2 / h^2`.
pub fn regularization_value<T: Real>(grid: &RegularGrid<T>, u: &[T], u_ref: &[T]) -> T {
    let inv_h2 = T::one() / (grid.spacing() * grid.spacing());
    let counts = grid.counts();
    let strides = grid.strides();
    let mut s = T::zero();
    for k in 0..grid.len() {
        let idx = grid.delinearize(k);
        let dk = u[k] - u_ref[k];
        for axis in 0..grid.dim() {
            if idx[axis] + 1 < counts[axis] {
                let j = k + strides[axis];
                let d = dk - (u[j] - u_ref[j]);
                s += d * d;
            }
        }
    }
    s * inv_h2 / T::lit(2.0)
}

/// Value and gradient `L (u - u_ref)` of the penalty.
pub fn regularization<T: Real>(
    u: &ScalarField<T>,
    u_ref: &ScalarField<T>,
) -> Result<(T, ScalarField<T>)> {
    if u.grid() != u_ref.grid() {
        return domain("regularization fields live on different grids");
    }
    let grid = *u.grid();
    let diff: Vec<T> = u.values().iter().zip(u_ref.values()).map(|(&a, &b)| a - b).collect();
    let mut g = vec![T::zero(); grid.len()];
    apply_laplacian(&grid, &diff, &mut g);
    let value = regularization_value(&grid, u.values(), u_ref.values());
    Ok((value, ScalarField::new(grid, g)?))
}
