//! Fast Marching for the plain and the factored eikonal equation.
//!
//! In factored mode the unknown is `tau1` with `tau = tau0 * tau1`, the front
//! is keyed by `tau`, and every node update solves the factored upwind
//! equation built from already accepted neighbors only. Plain mode runs the
//! same machinery on `tau` directly.

mod heap;
mod quadratic;
mod stencil;

pub use heap::FrontHeap;
pub use quadratic::{factored_term, plain_term, solve_piecewise, PiecewiseSolution, QuadraticTerm};
pub use stencil::{AxisStencil, Direction, StencilRecord};

use crate::error::{domain, EikonalError, Result};
use crate::grid::{DistanceFactor, RegularGrid, ScalarField, SourceSpec, MAX_DIM};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn as_u8(self) -> u8 {
        match self {
            Order::First => 1,
            Order::Second => 2,
        }
    }

    pub fn from_u8(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => domain(format!("order must be 1 or 2, got {n}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Solve for `tau1` in `tau = tau0 * tau1`.
    Factored,
    /// Solve the ordinary eikonal equation for `tau`.
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FmConfig {
    pub order: Order,
    pub mode: Mode,
    /// Revert an axis to the non-factored operator whenever the factored and
    /// non-factored derivatives disagree in sign.
    pub enforce_monotonicity: bool,
}

impl FmConfig {
    pub fn factored(order: Order) -> Self {
        Self {
            order,
            mode: Mode::Factored,
            enforce_monotonicity: false,
        }
    }

    pub fn plain(order: Order) -> Self {
        Self {
            order,
            mode: Mode::Plain,
            enforce_monotonicity: false,
        }
    }

    pub fn with_monotonicity(mut self, on: bool) -> Self {
        self.enforce_monotonicity = on;
        self
    }
}

impl Default for FmConfig {
    fn default() -> Self {
        Self::factored(Order::Second)
    }
}

/// Output of a Fast Marching run.
#[derive(Clone, Debug)]
pub struct FmSolution<T> {
    /// `tau1` in factored mode, `tau` in plain mode.
    pub tau1: ScalarField<T>,
    /// Travel time `tau0 * tau1` (equal to `tau1` in plain mode).
    pub tau: ScalarField<T>,
    /// Nodes in the order they were accepted; the source comes first.
    pub acceptance_order: Vec<usize>,
    pub stencils: Vec<StencilRecord>,
    pub source: SourceSpec,
    pub config: FmConfig,
}

impl<T: Real> FmSolution<T> {
    pub fn grid(&self) -> &RegularGrid<T> {
        self.tau1.grid()
    }

    /// `tau` along the acceptance order.
    pub fn accepted_times(&self) -> impl Iterator<Item = T> + '_ {
        self.acceptance_order.iter().map(move |&k| self.tau[k])
    }
}

/// Runs Fast Marching from a point source.
///
/// `m` is the squared slowness. In factored mode `dist` must be the distance
/// factor of `src`; plain mode ignores it.
pub fn fm_solve<T: Real>(
    grid: &RegularGrid<T>,
    m: &ScalarField<T>,
    src: &SourceSpec,
    dist: &DistanceFactor<T>,
    cfg: &FmConfig,
) -> Result<FmSolution<T>> {
    if m.grid() != grid {
        return domain("slowness field is defined on a different grid");
    }
    if let Some(k) = m.values().iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
        return domain(format!(
            "non-positive slowness: m[{k}] = {} must be positive and finite",
            m[k]
        ));
    }
    let s = src.linear(grid)?;
    if cfg.mode == Mode::Factored && (dist.grid() != grid || dist.source != *src) {
        return domain("distance factor does not belong to this grid and source");
    }
    let mut marcher = Marcher::new(grid, m.values(), dist, cfg);
    marcher.run(s)?;
    Ok(marcher.into_solution(*src, *cfg))
}

/// Convenience wrapper building the distance factor internally.
pub fn fm_solve_from_source<T: Real>(
    m: &ScalarField<T>,
    src: &SourceSpec,
    cfg: &FmConfig,
) -> Result<(FmSolution<T>, DistanceFactor<T>)> {
    let dist = crate::grid::build_distance_factor(m.grid(), src)?;
    let sol = fm_solve(m.grid(), m, src, &dist, cfg)?;
    Ok((sol, dist))
}

/// A stencil candidate on one axis before it becomes a quadratic term.
#[derive(Clone, Copy, Debug)]
struct AxisChoice {
    axis: usize,
    direction: Direction,
    nb: usize,
    nb2: Option<usize>,
    plain: bool,
}

pub(crate) struct Marcher<'a, T> {
    grid: RegularGrid<T>,
    m: &'a [T],
    tau0: Option<&'a [T]>,
    grad: [&'a [T]; MAX_DIM],
    second_order: bool,
    enforce: bool,
    h: T,
    tau1: Vec<T>,
    tau: Vec<T>,
    known: Vec<bool>,
    stencils: Vec<StencilRecord>,
    order: Vec<usize>,
    heap: FrontHeap<T>,
}

impl<'a, T: Real> Marcher<'a, T> {
    pub(crate) fn new(
        grid: &RegularGrid<T>,
        m: &'a [T],
        dist: &'a DistanceFactor<T>,
        cfg: &FmConfig,
    ) -> Self {
        let n = grid.len();
        let factored = cfg.mode == Mode::Factored;
        let empty: &[T] = &[];
        let mut grad = [empty; MAX_DIM];
        if factored {
            for (axis, g) in dist.grad.iter().enumerate() {
                grad[axis] = g.values();
            }
        }
        Self {
            grid: *grid,
            m,
            tau0: factored.then(|| dist.tau0.values()),
            grad,
            second_order: cfg.order == Order::Second,
            enforce: cfg.enforce_monotonicity && factored,
            h: grid.spacing(),
            tau1: vec![T::infinity(); n],
            tau: vec![T::infinity(); n],
            known: vec![false; n],
            stencils: vec![StencilRecord::default(); n],
            order: Vec::with_capacity(n),
            heap: FrontHeap::with_capacity(64 + 4 * (n as f64).sqrt() as usize),
        }
    }

    fn run(&mut self, s: usize) -> Result<()> {
        self.tau1[s] = if self.tau0.is_some() {
            self.m[s].sqrt()
        } else {
            T::zero()
        };
        self.tau[s] = T::zero();
        self.heap.insert(T::zero(), s);

        let dim = self.grid.dim();
        let counts = [
            self.grid.counts()[0],
            self.grid.counts()[1],
            if dim == 3 { self.grid.counts()[2] } else { 1 },
        ];
        let strides = self.grid.strides().to_vec();
        while let Some((_, k)) = self.heap.extract_min(&self.known) {
            self.known[k] = true;
            self.order.push(k);
            let idx = self.grid.delinearize(k);
            for axis in 0..dim {
                let st = strides[axis];
                if idx[axis] > 0 {
                    let mut nidx = idx;
                    nidx[axis] -= 1;
                    self.relax(k - st, &nidx);
                }
                if idx[axis] + 1 < counts[axis] {
                    let mut nidx = idx;
                    nidx[axis] += 1;
                    self.relax(k + st, &nidx);
                }
            }
        }
        if self.order.len() != self.grid.len() {
            return Err(EikonalError::Internal(format!(
                "fast marching accepted {} of {} nodes",
                self.order.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    /// Recomputes a non-accepted node and pushes it when its time improves.
    #[inline]
    fn relax(&mut self, k: usize, idx: &[usize; MAX_DIM]) {
        if self.known[k] {
            return;
        }
        if let Some((t1, record)) = self.local_update(k, idx) {
            let t = self.tau0_at(k) * t1;
            if t < self.tau[k] {
                self.tau1[k] = t1;
                self.tau[k] = t;
                self.stencils[k] = record;
                self.heap.insert(t, k);
            }
        }
    }

    #[inline]
    fn tau0_at(&self, k: usize) -> T {
        match self.tau0 {
            Some(t0) => t0[k],
            None => T::one(),
        }
    }

    /// Picks direction and order on every axis from accepted neighbors.
    fn choose_stencils(&self, k: usize, idx: &[usize; MAX_DIM], out: &mut [AxisChoice; MAX_DIM]) -> usize {
        let dim = self.grid.dim();
        let counts = self.grid.counts();
        let strides = self.grid.strides();
        let mut n = 0;
        for axis in 0..dim {
            let st = strides[axis];
            let i = idx[axis];
            let back = (i > 0 && self.known[k - st]).then(|| k - st);
            let fwd = (i + 1 < counts[axis] && self.known[k + st]).then(|| k + st);
            let (direction, nb) = match (back, fwd) {
                (Some(b), Some(f)) => {
                    if self.tau[b] <= self.tau[f] {
                        (Direction::Backward, b)
                    } else {
                        (Direction::Forward, f)
                    }
                }
                (Some(b), None) => (Direction::Backward, b),
                (None, Some(f)) => (Direction::Forward, f),
                (None, None) => continue,
            };
            let mut nb2 = None;
            if self.second_order {
                let cand = match direction {
                    Direction::Backward if i >= 2 => Some(nb - st),
                    Direction::Forward if i + 2 < counts[axis] => Some(nb + st),
                    _ => None,
                };
                if let Some(c) = cand {
                    let upwind = match direction {
                        Direction::Backward => self.tau[nb] >= self.tau[c],
                        _ => self.tau[nb] > self.tau[c],
                    };
                    if self.known[c] && upwind {
                        nb2 = Some(c);
                    }
                }
            }
            out[n] = AxisChoice {
                axis,
                direction,
                nb,
                nb2,
                plain: false,
            };
            n += 1;
        }
        n
    }

    fn build_term(&self, k: usize, c: &AxisChoice) -> Option<QuadraticTerm<T>> {
        let h = self.h;
        match self.tau0 {
            None => plain_term(T::one(), h, self.tau[c.nb], c.nb2.map(|j| self.tau[j])),
            Some(t0) => {
                if c.plain {
                    plain_term(t0[k], h, self.tau[c.nb], c.nb2.map(|j| self.tau[j]))
                } else {
                    let p = self.grad[c.axis][k];
                    let p = if c.direction == Direction::Forward { -p } else { p };
                    factored_term(t0[k], p, h, self.tau1[c.nb], c.nb2.map(|j| self.tau1[j]))
                }
            }
        }
    }

    /// Solves the local upwind equation at node `k` using accepted neighbors.
    ///
    /// Returns `None` when no usable upwind term exists.
    pub(crate) fn local_update(&self, k: usize, idx: &[usize; MAX_DIM]) -> Option<(T, StencilRecord)> {
        let mut choices = [AxisChoice {
            axis: 0,
            direction: Direction::None,
            nb: 0,
            nb2: None,
            plain: false,
        }; MAX_DIM];
        let n = self.choose_stencils(k, idx, &mut choices);
        let kappa2 = self.m[k];

        loop {
            let mut terms = [QuadraticTerm {
                alpha: T::zero(),
                beta: T::zero(),
            }; MAX_DIM];
            let mut slots = [usize::MAX; MAX_DIM];
            let mut nt = 0;
            for (ci, c) in choices[..n].iter().enumerate() {
                if let Some(t) = self.build_term(k, c) {
                    terms[nt] = t;
                    slots[nt] = ci;
                    nt += 1;
                }
            }
            let sol = solve_piecewise(&terms[..nt], kappa2)?;

            if self.enforce {
                let t = self.tau0_at(k) * sol.value;
                let mut switched = false;
                for (ti, &ci) in slots[..nt].iter().enumerate() {
                    let c = &mut choices[ci];
                    if c.plain || !sol.retains(ti) {
                        continue;
                    }
                    let slope = match c.nb2 {
                        None => t - self.tau[c.nb],
                        Some(j) => T::lit(3.0) * t - T::lit(4.0) * self.tau[c.nb] + self.tau[j],
                    };
                    if slope < T::zero() {
                        c.plain = true;
                        switched = true;
                    }
                }
                if switched {
                    continue;
                }
            }

            let mut record = StencilRecord::default();
            for (ti, &ci) in slots[..nt].iter().enumerate() {
                if sol.retains(ti) {
                    let c = &choices[ci];
                    record.axes[c.axis] = AxisStencil::new(c.direction, c.nb2.is_some(), c.plain);
                }
            }
            return Some((sol.value, record));
        }
    }

    fn into_solution(self, source: SourceSpec, config: FmConfig) -> FmSolution<T> {
        let grid = self.grid;
        FmSolution {
            tau1: ScalarField::new(grid, self.tau1).expect("sized by grid"),
            tau: ScalarField::new(grid, self.tau).expect("sized by grid"),
            acceptance_order: self.order,
            stencils: self.stencils,
            source,
            config,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_distance_factor;

    fn unit_grid(n1: usize, n2: usize) -> RegularGrid<f64> {
        RegularGrid::new(&[n1, n2], 1.0, &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn plain_first_order_3x3() {
        let g = unit_grid(3, 3);
        let src = SourceSpec::new(&[1, 1]);
        let m = ScalarField::constant(g, 1.0);
        let (sol, _) = fm_solve_from_source(&m, &src, &FmConfig::plain(Order::First)).unwrap();
        let corner = 1.0 + 0.5f64.sqrt();
        let expected = [corner, 1.0, corner, 1.0, 0.0, 1.0, corner, 1.0, corner];
        for (k, &e) in expected.iter().enumerate() {
            assert!((sol.tau[k] - e).abs() < 1e-15, "node {k}: {} vs {e}", sol.tau[k]);
        }
        assert_eq!(sol.acceptance_order[0], 4);
        assert_eq!(&sol.acceptance_order[1..5], &[1, 3, 5, 7]);
    }

    #[test]
    fn homogeneous_factored_is_exact() {
        let g = RegularGrid::new(&[21, 17], 0.1, &[0.0, 0.0]).unwrap();
        let m = ScalarField::constant(g, 2.25f64);
        let src = SourceSpec::new(&[6, 11]);
        for order in [Order::First, Order::Second] {
            let (sol, _) = fm_solve_from_source(&m, &src, &FmConfig::factored(order)).unwrap();
            for &v in sol.tau1.values() {
                assert!((v - 1.5).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn rejects_non_positive_slowness() {
        let g = unit_grid(4, 4);
        let mut m = ScalarField::constant(g, 1.0);
        m[5] = 0.0;
        let err = fm_solve_from_source(&m, &SourceSpec::new(&[0, 0]), &FmConfig::default()).unwrap_err();
        assert!(err.to_string().contains("non-positive slowness"));
        m[5] = f64::NAN;
        assert!(fm_solve_from_source(&m, &SourceSpec::new(&[0, 0]), &FmConfig::default()).is_err());
    }

    #[test]
    fn rejects_foreign_distance_factor() {
        let g = unit_grid(4, 4);
        let m = ScalarField::constant(g, 1.0);
        let d = build_distance_factor(&g, &SourceSpec::new(&[1, 1])).unwrap();
        let cfg = FmConfig::default();
        assert!(fm_solve(&g, &m, &SourceSpec::new(&[0, 0]), &d, &cfg).is_err());
        // plain mode does not look at the distance factor
        assert!(fm_solve(&g, &m, &SourceSpec::new(&[0, 0]), &d, &FmConfig::plain(Order::First)).is_ok());
    }

    #[test]
    fn local_update_needs_a_known_neighbor() {
        let g = unit_grid(5, 5);
        let m = ScalarField::constant(g, 1.0);
        let d = build_distance_factor(&g, &SourceSpec::new(&[2, 2])).unwrap();
        let mut marcher = Marcher::new(&g, m.values(), &d, &FmConfig::factored(Order::First));
        let idx = g.delinearize(0);
        assert!(marcher.local_update(0, &idx).is_none());
        // a single known neighbor yields a one-term solve
        marcher.known[12] = true;
        marcher.tau1[12] = 1.0;
        marcher.tau[12] = 0.0;
        let k = g.linearize(&[3, 2]).unwrap();
        let (v, rec) = marcher.local_update(k, &g.delinearize(k)).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(rec.axes[0].direction(), Direction::Backward);
        assert!(!rec.axes[1].is_active());
    }

    #[test]
    fn source_comes_first_and_order_is_permutation() {
        let g = unit_grid(7, 9);
        let m = ScalarField::from_fn(g, |x| 1.0 + 0.1 * x[0] + 0.05 * x[1]);
        let src = SourceSpec::new(&[3, 2]);
        let (sol, _) = fm_solve_from_source(&m, &src, &FmConfig::factored(Order::Second)).unwrap();
        assert_eq!(sol.acceptance_order[0], src.linear(&g).unwrap());
        let mut seen = vec![false; g.len()];
        for &k in &sol.acceptance_order {
            assert!(!seen[k]);
            seen[k] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
