//! Small synthetic tomography problem that runs in seconds.

use crate::error::Result;
use crate::grid::{RegularGrid, ScalarField, SourceSpec};
use crate::scalar::Real;

use super::{BoundMap, Geometry};

/// A true model, a starting model and an acquisition layout on one grid.
#[derive(Clone, Debug)]
pub struct SyntheticProblem<T> {
    pub grid: RegularGrid<T>,
    pub m_true: ScalarField<T>,
    /// Starting and reference model.
    pub m_init: ScalarField<T>,
    pub geometry: Geometry,
    pub bounds: BoundMap<T>,
}

/// 64 x 32 grid with `h = 0.05` (km), the second axis pointing down.
///
/// The true velocity (km/s) has a slow upper layer over a fast lower layer,
/// separated by a gently undulating interface and blended by a logistic
/// profile of scale 0.2 km; both layers speed up with depth. The starting model is a constant
/// velocity gradient with depth. Thirteen sources sit every five nodes on the
/// surface, starting at node 2, and every surface node is a receiver.
pub fn desk64<T: Real>() -> Result<SyntheticProblem<T>> {
    let h = T::lit(0.05);
    let grid = RegularGrid::new(&[64, 32], h, &[T::zero(), T::zero()])?;
    let width = T::lit(63.0) * h;
    let depth = T::lit(31.0) * h;
    let two_pi = T::lit(std::f64::consts::TAU);
    let m_true = ScalarField::from_fn(grid, |x| {
        let interface = T::lit(0.7) + T::lit(0.12) * (two_pi * x[0] / width).sin();
        let upper = T::lit(1.8) + T::lit(0.5) * x[1];
        let lower = T::lit(3.0) + T::lit(0.3) * (x[1] - interface);
        let s = T::one() / (T::one() + (-(x[1] - interface) / T::lit(0.2)).exp());
        let v = upper + (lower - upper) * s;
        T::one() / (v * v)
    });
    let m_init = ScalarField::from_fn(grid, |x| {
        let v = T::lit(1.8) + T::lit(1.4) * x[1] / depth;
        T::one() / (v * v)
    });
    let sources = (0..13).map(|i| SourceSpec::new(&[2 + 5 * i, 0])).collect();
    let receivers = (0..64).map(|i| i * grid.strides()[0]).collect();
    let bounds = BoundMap::new(T::one() / T::lit(4.5 * 4.5), T::one() / T::lit(1.2 * 1.2))?;
    Ok(SyntheticProblem {
        grid,
        m_true,
        m_init,
        geometry: Geometry { sources, receivers },
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let p = desk64::<f64>().unwrap();
        assert_eq!(p.geometry.sources.len(), 13);
        assert_eq!(p.geometry.receivers.len(), 64);
        p.geometry.validate(&p.grid).unwrap();
        for &r in &p.geometry.receivers {
            assert_eq!(p.grid.delinearize(r)[1], 0);
        }
        for m in p.m_true.values().iter().chain(p.m_init.values()) {
            assert!(*m > p.bounds.low() && *m < p.bounds.high());
        }
        // velocity increases with depth in every column
        for i in 0..64 {
            for j in 1..32 {
                let a = p.m_true[p.grid.linearize(&[i, j - 1]).unwrap()];
                let b = p.m_true[p.grid.linearize(&[i, j]).unwrap()];
                assert!(b < a);
            }
        }
    }
}
