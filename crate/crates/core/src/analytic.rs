//! Media with closed-form point-source travel times.
//!
//! * constant gradient of squared slowness: `kappa^2 = s0^2 + 2 a e1.(x - x0)`
//! * constant gradient of velocity: `1 / kappa = 1 / s0 + a e1.(x - x0)`
//! * Gaussian factor: `tau1` is a shifted Gaussian and `kappa` follows from
//!   the factored equation.
//!
//! `e1` is the first grid axis in every case.

use crate::error::{domain, Result};
use crate::grid::{RegularGrid, ScalarField, SourceSpec, MAX_DIM};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseKind {
    /// Constant gradient of squared slowness.
    Cgss,
    /// Constant gradient of velocity.
    Cgv,
    /// Gaussian factor.
    Gauss,
}

impl std::str::FromStr for CaseKind {
    type Err = crate::EikonalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cgss" => Ok(CaseKind::Cgss),
            "cgv" => Ok(CaseKind::Cgv),
            "gauss" => Ok(CaseKind::Gauss),
            other => domain(format!("unknown analytic case `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CaseParams<T> {
    Cgss { a: T, s0: T },
    Cgv { a: T, s0: T },
    /// `sigma` is the diagonal of the quadratic form; `center` is snapped
    /// down onto the grid before use.
    Gauss { sigma: [T; MAX_DIM], center: [T; MAX_DIM] },
}

/// An analytic medium on a box-shaped domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticCase<T> {
    pub params: CaseParams<T>,
    pub dim: usize,
    pub extent: [T; MAX_DIM],
    pub origin: [T; MAX_DIM],
    /// Physical source location; must be a grid node.
    pub source: [T; MAX_DIM],
}

/// Exact fields of an analytic case sampled on a grid.
#[derive(Clone, Debug)]
pub struct AnalyticFields<T> {
    /// Squared slowness.
    pub m: ScalarField<T>,
    pub tau: ScalarField<T>,
    pub tau1: ScalarField<T>,
    pub source: SourceSpec,
}

fn arr<T: Real>(v: &[f64]) -> [T; MAX_DIM] {
    let mut out = [T::zero(); MAX_DIM];
    for (o, &x) in out.iter_mut().zip(v) {
        *o = T::lit(x);
    }
    out
}

/// The reference parameterizations of the three cases.
pub fn default_params<T: Real>(kind: CaseKind, dim: usize) -> Result<AnalyticCase<T>> {
    let (extent, source2, source3) = match dim {
        2 => (arr(&[4.0, 8.0]), [0.0, 4.0], [0.0; 3]),
        3 => (arr(&[0.8, 1.6, 1.6]), [0.0; 2], [0.0, 0.8, 0.8]),
        _ => return domain(format!("analytic cases exist in 2D and 3D, not {dim}D")),
    };
    let default_source = if dim == 2 { arr(&source2) } else { arr(&source3) };
    let (params, source) = match (kind, dim) {
        (CaseKind::Cgss, 2) => (CaseParams::Cgss { a: T::lit(-0.4), s0: T::lit(2.0) }, default_source),
        (CaseKind::Cgss, _) => (CaseParams::Cgss { a: T::lit(-1.65), s0: T::lit(2.0) }, default_source),
        (CaseKind::Cgv, _) => (CaseParams::Cgv { a: T::lit(1.0), s0: T::lit(2.0) }, default_source),
        (CaseKind::Gauss, 2) => (
            CaseParams::Gauss {
                sigma: arr(&[0.1, 0.4]),
                center: arr(&[4.0 / 3.0, 2.0]),
            },
            arr(&[1.0, 2.0]),
        ),
        (CaseKind::Gauss, _) => (
            CaseParams::Gauss {
                sigma: arr(&[0.2, 0.4, 0.1]),
                center: arr(&[0.4, 1.6 / 3.0, 0.4]),
            },
            arr(&[0.2, 0.4, 0.4]),
        ),
    };
    Ok(AnalyticCase {
        params,
        dim,
        extent,
        origin: [T::zero(); MAX_DIM],
        source,
    })
}

impl<T: Real> AnalyticCase<T> {
    /// Homogeneous medium `kappa = s0` (the `a = 0` limit of the squared
    /// slowness gradient case) on the default 2D or 3D domain.
    pub fn homogeneous(dim: usize, s0: T) -> Result<Self> {
        let mut case = default_params(CaseKind::Cgss, dim)?;
        case.params = CaseParams::Cgss { a: T::zero(), s0 };
        Ok(case)
    }

    pub fn kind(&self) -> CaseKind {
        match self.params {
            CaseParams::Cgss { .. } => CaseKind::Cgss,
            CaseParams::Cgv { .. } => CaseKind::Cgv,
            CaseParams::Gauss { .. } => CaseKind::Gauss,
        }
    }

    /// The grid of spacing `h` covering the case's domain.
    pub fn grid(&self, h: T) -> Result<RegularGrid<T>> {
        RegularGrid::from_extent(&self.extent[..self.dim], h, &self.origin[..self.dim])
    }

    fn check_grid(&self, grid: &RegularGrid<T>) -> Result<()> {
        if grid.dim() != self.dim {
            return domain(format!("{}D case on a {}D grid", self.dim, grid.dim()));
        }
        Ok(())
    }

    pub fn source_on(&self, grid: &RegularGrid<T>) -> Result<SourceSpec> {
        self.check_grid(grid)?;
        SourceSpec::at_point(grid, &self.source[..self.dim])
    }

    /// Gaussian center snapped down onto the grid.
    fn gauss_center(&self, grid: &RegularGrid<T>, center: &[T; MAX_DIM]) -> [T; MAX_DIM] {
        let idx = grid.floor_point(&center[..self.dim]);
        grid.coord_of_index(&idx)
    }

    /// Samples `m`, `tau` and `tau1` on `grid`.
    pub fn eval(&self, grid: &RegularGrid<T>) -> Result<AnalyticFields<T>> {
        let source = self.source_on(grid)?;
        let s = source.linear(grid)?;
        let x0 = grid.coord(s);
        let dim = self.dim;
        let n = grid.len();
        let mut m = Vec::with_capacity(n);
        let mut tau = Vec::with_capacity(n);
        let mut tau1 = Vec::with_capacity(n);
        let center = match &self.params {
            CaseParams::Gauss { center, .. } => self.gauss_center(grid, center),
            _ => [T::zero(); MAX_DIM],
        };
        for k in 0..n {
            let x = grid.coord(k);
            let mut d = [T::zero(); MAX_DIM];
            for axis in 0..dim {
                d[axis] = x[axis] - x0[axis];
            }
            let r2: T = d[..dim].iter().map(|&v| v * v).sum();
            let r = r2.sqrt();
            let (mk, tk, t1k) = match self.params {
                CaseParams::Cgss { a, s0 } => {
                    let kappa2 = s0 * s0 + T::lit(2.0) * a * d[0];
                    if !(kappa2 > T::zero()) {
                        return domain(format!("squared slowness {kappa2} is not positive at node {k}"));
                    }
                    let t = cgss_time(a, s0, d[0], r2)
                        .ok_or_else(|| crate::EikonalError::Domain(format!("no real travel time at node {k}")))?;
                    let t1 = if k == s { kappa2.sqrt() } else { t / r };
                    (kappa2, t, t1)
                }
                CaseParams::Cgv { a, s0 } => {
                    let inv = T::one() / s0 + a * d[0];
                    if !(inv > T::zero()) {
                        return domain(format!("velocity {inv} is not positive at node {k}"));
                    }
                    let kappa = T::one() / inv;
                    let t = cgv_time(a, s0, kappa, r2);
                    let t1 = if k == s { kappa } else { t / r };
                    (kappa * kappa, t, t1)
                }
                CaseParams::Gauss { sigma, .. } => {
                    if sigma[..dim].iter().any(|&v| !(v > T::zero())) {
                        return domain("Gaussian weights must be positive");
                    }
                    let (t1, g1) = gauss_factor(&sigma, &center, &x, dim);
                    let mut kappa2 = T::zero();
                    for axis in 0..dim {
                        let g0 = if k == s {
                            if axis == 0 { T::one() } else { T::zero() }
                        } else {
                            d[axis] / r
                        };
                        let c = r * g1[axis] + t1 * g0;
                        kappa2 += c * c;
                    }
                    (kappa2, r * t1, t1)
                }
            };
            m.push(mk);
            tau.push(tk);
            tau1.push(t1k);
        }
        Ok(AnalyticFields {
            m: ScalarField::new(*grid, m)?,
            tau: ScalarField::new(*grid, tau)?,
            tau1: ScalarField::new(*grid, tau1)?,
            source,
        })
    }

    /// Slowness `kappa` at a point.
    pub fn kappa_at(&self, grid: &RegularGrid<T>, x: &[T]) -> Result<T> {
        let x0 = grid.coord(self.source_on(grid)?.linear(grid)?);
        let d0 = x[0] - x0[0];
        match self.params {
            CaseParams::Cgss { a, s0 } => Ok((s0 * s0 + T::lit(2.0) * a * d0).sqrt()),
            CaseParams::Cgv { a, s0 } => Ok(T::one() / (T::one() / s0 + a * d0)),
            CaseParams::Gauss { .. } => {
                let (_, g) = self.time_and_gradient(grid, x)?;
                Ok(g[..self.dim].iter().map(|&v| v * v).sum::<T>().sqrt())
            }
        }
    }

    /// Exact travel time and its gradient at a point other than the source.
    pub fn time_and_gradient(&self, grid: &RegularGrid<T>, x: &[T]) -> Result<(T, [T; MAX_DIM])> {
        let dim = self.dim;
        let x0 = grid.coord(self.source_on(grid)?.linear(grid)?);
        let mut d = [T::zero(); MAX_DIM];
        for axis in 0..dim {
            d[axis] = x[axis] - x0[axis];
        }
        let r2: T = d[..dim].iter().map(|&v| v * v).sum();
        if !(r2 > T::zero()) {
            return domain("travel time gradient is singular at the source");
        }
        let two = T::lit(2.0);
        let mut g = [T::zero(); MAX_DIM];
        let t = match self.params {
            CaseParams::Cgss { a, s0 } => {
                let s2 = s0 * s0 + a * d[0];
                let w = (s2 * s2 - a * a * r2).sqrt();
                let den = s2 + w;
                let sig2 = two * r2 / den;
                let sig = sig2.sqrt();
                for axis in 0..dim {
                    let ds2 = if axis == 0 { a } else { T::zero() };
                    let dr2 = two * d[axis];
                    let dw = (s2 * ds2 - a * a * d[axis]) / w;
                    let dden = ds2 + dw;
                    let dsig2 = (two * dr2 * den - two * r2 * dden) / (den * den);
                    let dsig = dsig2 / (two * sig);
                    g[axis] = ds2 * sig + (s2 - a * a * sig2 / two) * dsig;
                }
                s2 * sig - a * a * sig * sig2 / T::lit(6.0)
            }
            CaseParams::Cgv { a, s0 } => {
                let kappa = T::one() / (T::one() / s0 + a * d[0]);
                let half = T::lit(0.5);
                let eps = half * s0 * a * a * kappa * r2;
                let root = (eps * (two + eps)).sqrt();
                for axis in 0..dim {
                    let dk = if axis == 0 { -a * kappa * kappa } else { T::zero() };
                    let dz = half * s0 * a * a * (dk * r2 + kappa * two * d[axis]);
                    g[axis] = dz / (a * root);
                }
                cgv_time(a, s0, kappa, r2)
            }
            CaseParams::Gauss { sigma, center } => {
                let c = self.gauss_center(grid, &center);
                let (t1, g1) = gauss_factor(&sigma, &c, x, dim);
                let r = r2.sqrt();
                for axis in 0..dim {
                    g[axis] = r * g1[axis] + t1 * d[axis] / r;
                }
                r * t1
            }
        };
        Ok((t, g))
    }
}

/// Travel time for constant gradient of squared slowness; `None` when the
/// point is beyond the turning region and no real time exists.
fn cgss_time<T: Real>(a: T, s0: T, d0: T, r2: T) -> Option<T> {
    let s2 = s0 * s0 + a * d0;
    let disc = s2 * s2 - a * a * r2;
    if disc < T::zero() {
        return None;
    }
    let den = s2 + disc.sqrt();
    if !(den > T::zero()) {
        return if r2 == T::zero() { Some(T::zero()) } else { None };
    }
    let sig2 = T::lit(2.0) * r2 / den;
    let sig = sig2.sqrt();
    Some(s2 * sig - a * a * sig * sig2 / T::lit(6.0))
}

/// Travel time for constant gradient of velocity.
fn cgv_time<T: Real>(a: T, s0: T, kappa: T, r2: T) -> T {
    if a == T::zero() {
        return s0 * r2.sqrt();
    }
    // acosh(1 + eps) = ln(1 + eps + sqrt(eps (2 + eps)))
    let eps = T::lit(0.5) * s0 * a * a * kappa * r2;
    (eps + (eps * (T::lit(2.0) + eps)).sqrt()).ln_1p() / a
}

/// Gaussian factor `1/2 exp(-(x - c)^T S (x - c)) + 1/2` and its gradient.
fn gauss_factor<T: Real>(sigma: &[T; MAX_DIM], center: &[T; MAX_DIM], x: &[T], dim: usize) -> (T, [T; MAX_DIM]) {
    let mut q = T::zero();
    for axis in 0..dim {
        let e = x[axis] - center[axis];
        q += sigma[axis] * e * e;
    }
    let bump = T::lit(0.5) * (-q).exp();
    let mut g = [T::zero(); MAX_DIM];
    for axis in 0..dim {
        g[axis] = -bump * T::lit(2.0) * sigma[axis] * (x[axis] - center[axis]);
    }
    (bump + T::lit(0.5), g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(kind: CaseKind, dim: usize) -> AnalyticCase<f64> {
        default_params(kind, dim).unwrap()
    }

    #[test]
    fn default_parameters() {
        let c = case(CaseKind::Cgss, 2);
        assert_eq!(c.params, CaseParams::Cgss { a: -0.4, s0: 2.0 });
        assert_eq!(&c.source[..2], &[0.0, 4.0]);
        assert_eq!(&c.extent[..2], &[4.0, 8.0]);
        let c = case(CaseKind::Cgv, 3);
        assert_eq!(c.params, CaseParams::Cgv { a: 1.0, s0: 2.0 });
        assert_eq!(c.source, [0.0, 0.8, 0.8]);
        let c = case(CaseKind::Cgss, 3);
        assert_eq!(c.params, CaseParams::Cgss { a: -1.65, s0: 2.0 });
        let c = case(CaseKind::Gauss, 2);
        assert_eq!(&c.source[..2], &[1.0, 2.0]);
        assert!(default_params::<f64>(CaseKind::Gauss, 4).is_err());
        assert!("bogus".parse::<CaseKind>().is_err());
        assert_eq!("CGV".parse::<CaseKind>().unwrap(), CaseKind::Cgv);
    }

    #[test]
    fn gauss_center_is_floored() {
        let c = case(CaseKind::Gauss, 2);
        let g = c.grid(1.0 / 80.0).unwrap();
        let CaseParams::Gauss { center, .. } = c.params else { unreachable!() };
        let snapped = c.gauss_center(&g, &center);
        assert!((snapped[0] - 106.0 / 80.0).abs() < 1e-14);
        assert!((snapped[1] - 2.0).abs() < 1e-14);
        let f = c.eval(&g).unwrap();
        let k = g.linearize(&[106, 160]).unwrap();
        assert!((f.tau1[k] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn source_values() {
        for kind in [CaseKind::Cgss, CaseKind::Cgv, CaseKind::Gauss] {
            for dim in [2, 3] {
                let c = case(kind, dim);
                let g = c.grid(if dim == 2 { 0.1 } else { 0.05 }).unwrap();
                let f = c.eval(&g).unwrap();
                let s = f.source.linear(&g).unwrap();
                assert_eq!(f.tau[s], 0.0);
                assert!((f.tau1[s] - f.m[s].sqrt()).abs() < 1e-14);
            }
        }
        let c = case(CaseKind::Cgv, 2);
        let g = c.grid(0.1).unwrap();
        let f = c.eval(&g).unwrap();
        assert_eq!(f.tau1[f.source.linear(&g).unwrap()], 2.0);
    }

    #[test]
    fn cgss_closed_form_value() {
        // reference computed from the closed form in an independent scalar script
        let t: f64 = cgss_time(-0.4, 2.0, 0.0, 1.0).unwrap();
        assert!((t - 1.9991650982780287).abs() < 1e-15);
    }

    #[test]
    fn degenerate_gradient_is_homogeneous() {
        let c = AnalyticCase::<f64>::homogeneous(2, 1.5).unwrap();
        let g = c.grid(0.25).unwrap();
        let f = c.eval(&g).unwrap();
        let s = f.source.linear(&g).unwrap();
        let x0 = g.coord(s);
        for k in 0..g.len() {
            let x = g.coord(k);
            let r = ((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2)).sqrt();
            assert!((f.tau[k] - 1.5 * r).abs() < 1e-13);
            assert!((f.m[k] - 2.25).abs() < 1e-15);
        }
    }

    #[test]
    fn factorization_consistency() {
        for kind in [CaseKind::Cgss, CaseKind::Cgv, CaseKind::Gauss] {
            for dim in [2, 3] {
                let c = case(kind, dim);
                let g = c.grid(0.1).unwrap();
                let f = c.eval(&g).unwrap();
                let s = f.source.linear(&g).unwrap();
                let x0 = g.coord(s);
                for k in (0..g.len()).filter(|&k| k != s) {
                    let x = g.coord(k);
                    let r: f64 = (0..dim).map(|a| (x[a] - x0[a]).powi(2)).sum::<f64>().sqrt();
                    let prod = r * f.tau1[k];
                    assert!((prod - f.tau[k]).abs() <= 1e-12 * f.tau[k].abs());
                }
            }
        }
    }

    #[test]
    fn eikonal_residual_with_analytic_gradients() {
        for kind in [CaseKind::Cgss, CaseKind::Cgv, CaseKind::Gauss] {
            for dim in [2, 3] {
                let c = case(kind, dim);
                let g = c.grid(0.1).unwrap();
                let f = c.eval(&g).unwrap();
                let s = f.source.linear(&g).unwrap();
                for k in (0..g.len()).step_by(7).filter(|&k| k != s) {
                    let x = g.coord(k);
                    let (t, grad) = c.time_and_gradient(&g, &x[..dim]).unwrap();
                    assert!((t - f.tau[k]).abs() < 1e-12 * (1.0 + t));
                    let lhs: f64 = grad[..dim].iter().map(|v| v * v).sum();
                    assert!(
                        (lhs - f.m[k]).abs() <= 1e-10,
                        "{kind:?} {dim}D node {k}: {lhs} vs {}",
                        f.m[k]
                    );
                }
            }
        }
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        for kind in [CaseKind::Cgss, CaseKind::Cgv, CaseKind::Gauss] {
            for dim in [2, 3] {
                let c = case(kind, dim);
                let g = c.grid(0.1).unwrap();
                let s = c.source_on(&g).unwrap().linear(&g).unwrap();
                let x0 = g.coord(s);
                for k in (0..g.len()).step_by(11) {
                    let x = g.coord(k);
                    let r: f64 = (0..dim).map(|a| (x[a] - x0[a]).powi(2)).sum::<f64>().sqrt();
                    if r < 0.3 {
                        continue;
                    }
                    let (_, grad) = c.time_and_gradient(&g, &x[..dim]).unwrap();
                    let e = 1e-4;
                    for axis in 0..dim {
                        let mut xp = x;
                        let mut xm = x;
                        xp[axis] += e;
                        xm[axis] -= e;
                        let (tp, _) = c.time_and_gradient(&g, &xp[..dim]).unwrap();
                        let (tm, _) = c.time_and_gradient(&g, &xm[..dim]).unwrap();
                        let fd = (tp - tm) / (2.0 * e);
                        assert!((fd - grad[axis]).abs() < 1e-6, "{kind:?} axis {axis}: {fd} vs {}", grad[axis]);
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_media_are_rejected() {
        let mut c = case(CaseKind::Cgss, 2);
        c.params = CaseParams::Cgss { a: -1.0, s0: 1.0 };
        assert!(c.eval(&c.grid(0.5).unwrap()).is_err());
        let mut c = case(CaseKind::Cgv, 2);
        c.params = CaseParams::Cgv { a: -1.0, s0: 2.0 };
        assert!(c.eval(&c.grid(0.5).unwrap()).is_err());
        let mut c = case(CaseKind::Gauss, 2);
        c.params = CaseParams::Gauss { sigma: [0.1, -0.4, 0.0], center: [1.0, 2.0, 0.0] };
        assert!(c.eval(&c.grid(0.5).unwrap()).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let c = default_params::<f32>(CaseKind::Cgv, 2).unwrap();
        let g = c.grid(0.25).unwrap();
        let f = c.eval(&g).unwrap();
        assert_eq!(f.tau1[f.source.linear(&g).unwrap()], 2.0f32);
    }
}
