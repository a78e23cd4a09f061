//! Fast Marching for the factored eikonal equation.
//!
//! The crate computes first-arrival travel times from a point source on a
//! uniform 2D or 3D grid by solving `|grad(tau0 * tau1)|^2 = m`, where `tau0`
//! is the distance to the source and `m` the squared slowness. On top of the
//! solver it provides the exact Jacobian of `tau1` with respect to `m`
//! (applied by triangular substitution in acceptance order) and a
//! Gauss-Newton travel-time tomography driver.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the tests and the
//! command line use.

// `!(x > 0)` guards are meant to reject NaN as well, and index loops over
// parallel per-axis arrays read better than zipped iterators.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod bench;
pub mod error;
pub mod fm;
pub mod grid;
pub mod io;
pub mod scalar;
pub mod sensitivity;
pub mod tomography;

pub use error::{EikonalError, Result};
pub use fm::{fm_solve, fm_solve_from_source, FmConfig, FmSolution, Mode, Order, StencilRecord};
pub use grid::{
    build_distance_factor, linf_error, mean_l2_error, DistanceFactor, RegularGrid, ScalarField,
    SourceSpec,
};
pub use scalar::Real;

pub type Grid = RegularGrid<f64>;
pub type Field = ScalarField<f64>;
pub type Distance = DistanceFactor<f64>;
pub type Solution = FmSolution<f64>;

pub type Grid32 = RegularGrid<f32>;
pub type Field32 = ScalarField<f32>;
