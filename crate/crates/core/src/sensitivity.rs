//! Jacobian of the Fast Marching factor `tau1` with respect to the squared
//! slowness `m`.
//!
//! Writing the discrete equation solved by the march as
//! `f(m, tau1) = sum_a (Dhat_a tau1)^2 - m = 0`, where `Dhat_a` are exactly the
//! upwind operators recorded for every node, gives `J = A^-1` with
//! `A = sum_a diag(2 Dhat_a tau1) Dhat_a`. Every off-diagonal entry in the row
//! of a node refers to a node accepted before it, so `A` permuted by the
//! acceptance order is lower triangular and `J v` costs one forward
//! substitution. `J^T v` is the matching backward substitution.

use std::io::Write;

use crate::error::{domain, EikonalError, Result};
use crate::fm::{Direction, FmSolution, Mode};
use crate::grid::{DistanceFactor, RegularGrid, ScalarField};
use crate::scalar::Real;

/// Sparse rows of `A = J^-1`, stored in acceptance order.
#[derive(Clone, Debug)]
pub struct SensitivityOperator<T> {
    grid: RegularGrid<T>,
    /// Node of the row at each position.
    order: Vec<usize>,
    diag: Vec<T>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

/// Coefficients of one upwind operator row: diagonal plus up to two neighbors.
struct OperatorRow<T> {
    diag: T,
    off: [(usize, T); 2],
    n_off: usize,
}

impl<T: Real> OperatorRow<T> {
    fn apply(&self, k: usize, x: &[T]) -> T {
        let mut s = self.diag * x[k];
        for &(j, c) in &self.off[..self.n_off] {
            s += c * x[j];
        }
        s
    }
}

/// Assembles `A` from the stencils a factored or plain march recorded.
pub fn assemble_operator<T: Real>(
    sol: &FmSolution<T>,
    dist: &DistanceFactor<T>,
) -> Result<SensitivityOperator<T>> {
    let grid = *sol.grid();
    let factored = sol.config.mode == Mode::Factored;
    if factored && (dist.grid() != &grid || dist.source != sol.source) {
        return domain("distance factor does not match the solution");
    }
    let n = grid.len();
    let dim = grid.dim();
    let h = grid.spacing();
    let tau1 = sol.tau1.values();
    let s = sol.source.linear(&grid)?;
    let tau0 = |k: usize| if factored { dist.tau0[k] } else { T::one() };

    let mut position = vec![usize::MAX; n];
    for (p, &k) in sol.acceptance_order.iter().enumerate() {
        position[k] = p;
    }
    if sol.acceptance_order.len() != n || position.contains(&usize::MAX) {
        return Err(EikonalError::Internal("acceptance order is not a permutation".into()));
    }

    let mut diag = Vec::with_capacity(n);
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(2 * dim * n);
    let mut vals = Vec::with_capacity(2 * dim * n);
    row_ptr.push(0);
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let onehalf = T::lit(1.5);

    for (p, &k) in sol.acceptance_order.iter().enumerate() {
        if k == s {
            let g2: T = if factored {
                dist.grad.iter().map(|g| g[k] * g[k]).sum()
            } else {
                T::zero()
            };
            let d = two * tau1[k] * g2;
            if factored && !(d > T::zero()) {
                return Err(EikonalError::Internal("source row has no positive diagonal".into()));
            }
            // plain mode: tau(x0) = 0 is fixed, so the source row is the identity
            diag.push(if factored { d } else { T::one() });
            row_ptr.push(cols.len());
            continue;
        }
        let idx = grid.delinearize(k);
        let mut d = T::zero();
        let record = &sol.stencils[k];
        for axis in 0..dim {
            let st = record.axes[axis];
            let step = grid.strides()[axis];
            let (nb1, nb2) = match st.direction() {
                Direction::None => continue,
                Direction::Backward => {
                    if idx[axis] < st.approx_order() as usize {
                        return Err(EikonalError::Internal(format!("stencil of node {k} leaves the grid")));
                    }
                    (k - step, k.wrapping_sub(2 * step))
                }
                Direction::Forward => {
                    if idx[axis] + (st.approx_order() as usize) >= grid.counts()[axis] {
                        return Err(EikonalError::Internal(format!("stencil of node {k} leaves the grid")));
                    }
                    (k + step, k + 2 * step)
                }
            };
            let second = st.approx_order() == 2;
            let t0 = tau0(k);
            let row = if !factored || st.used_plain_fallback() {
                // Dhat tau1 = D (tau0 tau1)
                if second {
                    OperatorRow {
                        diag: onehalf * t0 / h,
                        off: [(nb1, -two * tau0(nb1) / h), (nb2, half * tau0(nb2) / h)],
                        n_off: 2,
                    }
                } else {
                    OperatorRow {
                        diag: t0 / h,
                        off: [(nb1, -tau0(nb1) / h), (0, T::zero())],
                        n_off: 1,
                    }
                }
            } else {
                let p = dist.grad[axis][k];
                let p = if st.direction() == Direction::Forward { -p } else { p };
                if second {
                    OperatorRow {
                        diag: onehalf * t0 / h + p,
                        off: [(nb1, -two * t0 / h), (nb2, half * t0 / h)],
                        n_off: 2,
                    }
                } else {
                    OperatorRow {
                        diag: t0 / h + p,
                        off: [(nb1, -t0 / h), (0, T::zero())],
                        n_off: 1,
                    }
                }
            };
            let g = two * row.apply(k, tau1);
            d += g * row.diag;
            for &(j, c) in &row.off[..row.n_off] {
                if position[j] >= p {
                    return Err(EikonalError::Internal(format!(
                        "row of node {k} references node {j} accepted later"
                    )));
                }
                cols.push(j);
                vals.push(g * c);
            }
        }
        if !(d != T::zero()) || !d.is_finite() {
            return Err(EikonalError::Internal(format!("zero diagonal in row of node {k}")));
        }
        diag.push(d);
        row_ptr.push(cols.len());
    }

    Ok(SensitivityOperator {
        grid,
        order: sol.acceptance_order.clone(),
        diag,
        row_ptr,
        cols,
        vals,
    })
}

impl<T: Real> SensitivityOperator<T> {
    pub fn grid(&self) -> &RegularGrid<T> {
        &self.grid
    }

    pub fn acceptance_order(&self) -> &[usize] {
        &self.order
    }

    pub fn nnz(&self) -> usize {
        self.cols.len() + self.diag.len()
    }

    /// Diagonal entry of the row of node `k`.
    pub fn diagonal(&self) -> ScalarField<T> {
        let mut d = vec![T::zero(); self.order.len()];
        for (p, &k) in self.order.iter().enumerate() {
            d[k] = self.diag[p];
        }
        ScalarField::new(self.grid, d).expect("sized by grid")
    }

    /// All entries as `(row node, column node, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.order.iter().enumerate().flat_map(move |(p, &k)| {
            std::iter::once((k, k, self.diag[p])).chain(
                (self.row_ptr[p]..self.row_ptr[p + 1]).map(move |e| (k, self.cols[e], self.vals[e])),
            )
        })
    }

    /// `A x` computed from the stored rows.
    pub fn multiply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); x.len()];
        for (p, &k) in self.order.iter().enumerate() {
            let mut s = self.diag[p] * x[k];
            for e in self.row_ptr[p]..self.row_ptr[p + 1] {
                s += self.vals[e] * x[self.cols[e]];
            }
            y[k] = s;
        }
        y
    }

    /// Solves `A e = v` by forward substitution, i.e. `e = J v`.
    pub fn jacobian_into(&self, v: &[T], e: &mut [T]) {
        assert_eq!(v.len(), self.order.len());
        assert_eq!(e.len(), self.order.len());
        for (p, &k) in self.order.iter().enumerate() {
            let mut r = v[k];
            for idx in self.row_ptr[p]..self.row_ptr[p + 1] {
                r -= self.vals[idx] * e[self.cols[idx]];
            }
            e[k] = r / self.diag[p];
        }
    }

    /// Solves `A^T e = v` by backward substitution, i.e. `e = J^T v`.
    pub fn jacobian_transpose_into(&self, v: &[T], e: &mut [T]) {
        assert_eq!(v.len(), self.order.len());
        assert_eq!(e.len(), self.order.len());
        e.copy_from_slice(v);
        for (p, &k) in self.order.iter().enumerate().rev() {
            let ek = e[k] / self.diag[p];
            e[k] = ek;
            for idx in self.row_ptr[p]..self.row_ptr[p + 1] {
                e[self.cols[idx]] -= self.vals[idx] * ek;
            }
        }
    }

    pub fn apply_jacobian(&self, v: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(v)?;
        let mut e = vec![T::zero(); v.values().len()];
        self.jacobian_into(v.values(), &mut e);
        ScalarField::new(self.grid, e)
    }

    pub fn apply_jacobian_transpose(&self, v: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.check(v)?;
        let mut e = vec![T::zero(); v.values().len()];
        self.jacobian_transpose_into(v.values(), &mut e);
        ScalarField::new(self.grid, e)
    }

    fn check(&self, v: &ScalarField<T>) -> Result<()> {
        if v.grid() != &self.grid {
            return domain("vector is defined on a different grid than the operator");
        }
        Ok(())
    }

    /// Writes `A` as `row col value` lines, one entry per line.
    pub fn write_coordinates<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# rows={} nnz={}", self.order.len(), self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{r} {c} {:e}", v.to_f64_lossy())?;
        }
        Ok(())
    }
}

/// Residual of the implicit equation at every node: `sum_a (Dhat_a tau1)^2 - m`,
/// evaluated with the recorded stencils.
pub fn implicit_residual<T: Real>(
    sol: &FmSolution<T>,
    dist: &DistanceFactor<T>,
    m: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    // A tau1 = sum_a 2 (Dhat_a tau1)^2, except on the plain-mode source row
    let op = assemble_operator(sol, dist)?;
    let a_tau = op.multiply(sol.tau1.values());
    let s = sol.source.linear(sol.grid())?;
    let plain = sol.config.mode == Mode::Plain;
    let values = a_tau
        .iter()
        .zip(m.values())
        .enumerate()
        .map(|(k, (&v, &mk))| {
            if plain && k == s {
                T::zero()
            } else {
                v / T::lit(2.0) - mk
            }
        })
        .collect();
    ScalarField::new(*sol.grid(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm::{fm_solve_from_source, FmConfig, Order};
    use crate::grid::{RegularGrid, SourceSpec};

    fn smooth_m(g: RegularGrid<f64>) -> ScalarField<f64> {
        ScalarField::from_fn(g, |x| {
            let v = 1.0 + 0.3 * (0.9 * x[0]).sin() * (0.7 * x[1] + 0.2).cos() + 0.1 * x[1];
            1.0 / (v * v)
        })
    }

    #[test]
    fn homogeneous_source_row() {
        let g = RegularGrid::new(&[9, 9], 0.5, &[0.0, 0.0]).unwrap();
        let m = ScalarField::constant(g, 1.0f64);
        let src = SourceSpec::new(&[3, 5]);
        let (sol, dist) = fm_solve_from_source(&m, &src, &FmConfig::factored(Order::First)).unwrap();
        let op = assemble_operator(&sol, &dist).unwrap();
        let s = src.linear(&g).unwrap();
        let entries: Vec<_> = op.triplets().filter(|t| t.0 == s).collect();
        assert_eq!(entries.len(), 1);
        assert!((entries[0].2 - 2.0).abs() < 1e-14);
        let mut v = ScalarField::zeros(g);
        v[s] = 1.0;
        let e = op.apply_jacobian(&v).unwrap();
        assert!((e[s] - 0.5).abs() < 1e-15);
        let z = op.apply_jacobian(&ScalarField::zeros(g)).unwrap();
        assert!(z.values().iter().all(|&x| x == 0.0));
        let z = op.apply_jacobian_transpose(&ScalarField::zeros(g)).unwrap();
        assert!(z.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rows_reproduce_the_slowness() {
        let g = RegularGrid::new(&[15, 12], 0.2, &[0.0, 0.0]).unwrap();
        let m = smooth_m(g);
        for cfg in [
            FmConfig::factored(Order::First),
            FmConfig::factored(Order::Second),
            FmConfig::factored(Order::Second).with_monotonicity(true),
            FmConfig::plain(Order::First),
            FmConfig::plain(Order::Second),
        ] {
            let (sol, dist) = fm_solve_from_source(&m, &SourceSpec::new(&[4, 7]), &cfg).unwrap();
            let r = implicit_residual(&sol, &dist, &m).unwrap();
            for k in 0..g.len() {
                assert!(r[k].abs() <= 1e-10 * m[k], "{cfg:?} node {k}: {}", r[k]);
            }
        }
    }

    #[test]
    fn permuted_operator_is_lower_triangular_with_positive_diagonal() {
        let g = RegularGrid::new(&[3, 3], 1.0, &[0.0, 0.0]).unwrap();
        let m = ScalarField::from_fn(g, |x| 1.0 + 0.1 * x[0]);
        let (sol, dist) = fm_solve_from_source(&m, &SourceSpec::new(&[1, 1]), &FmConfig::factored(Order::Second)).unwrap();
        let op = assemble_operator(&sol, &dist).unwrap();
        let mut pos = [0usize; 9];
        for (p, &k) in op.acceptance_order().iter().enumerate() {
            pos[k] = p;
        }
        for (r, c, v) in op.triplets() {
            assert!(pos[c] <= pos[r]);
            if r == c {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn rejects_vectors_on_other_grids() {
        let g = RegularGrid::new(&[4, 4], 1.0, &[0.0, 0.0]).unwrap();
        let m = ScalarField::constant(g, 1.0);
        let (sol, dist) = fm_solve_from_source(&m, &SourceSpec::new(&[0, 0]), &FmConfig::default()).unwrap();
        let op = assemble_operator(&sol, &dist).unwrap();
        let other = ScalarField::zeros(RegularGrid::new(&[4, 5], 1.0, &[0.0, 0.0]).unwrap());
        assert!(op.apply_jacobian(&other).is_err());
        assert!(op.apply_jacobian_transpose(&other).is_err());
    }

    #[test]
    fn coordinate_dump_lists_every_entry() {
        let g = RegularGrid::new(&[3, 4], 1.0, &[0.0, 0.0]).unwrap();
        let m = ScalarField::constant(g, 1.0);
        let (sol, dist) = fm_solve_from_source(&m, &SourceSpec::new(&[1, 1]), &FmConfig::default()).unwrap();
        let op = assemble_operator(&sol, &dist).unwrap();
        let mut buf = Vec::new();
        op.write_coordinates(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), op.nnz() + 1);
        for line in text.lines().skip(1) {
            let parts: Vec<_> = line.split_whitespace().collect();
            assert_eq!(parts.len(), 3);
            parts[2].parse::<f64>().unwrap();
        }
    }
}
