//! Upwind terms and the piecewise quadratic solve.
//!
//! After the stencil on every axis is fixed, the discrete equation at a node
//! reduces to `sum_k max(alpha_k (t - beta_k), 0)^2 = kappa^2` in the node
//! unknown `t`.

use crate::scalar::Real;

/// One axis contribution `alpha * (t - beta)` to the local equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticTerm<T> {
    pub alpha: T,
    pub beta: T,
}

/// Terms with `alpha` at or below this bound are dropped before solving.
#[inline]
pub fn alpha_floor<T: Real>(tau0: T, h: T) -> T {
    T::lit(1e-14) * (tau0 / h + T::one())
}

/// Factored upwind term for the factor `tau1`.
///
/// `p0_dir` is the gradient component of `tau0` along the axis, negated for
/// forward differences. `nb` holds `tau1` at the first neighbor and, for a
/// second order stencil, `nb2` the value one further out.
pub fn factored_term<T: Real>(tau0: T, p0_dir: T, h: T, nb: T, nb2: Option<T>) -> Option<QuadraticTerm<T>> {
    let (alpha, num) = match nb2 {
        None => (tau0 / h + p0_dir, tau0 * nb),
        Some(nb2) => (
            T::lit(1.5) * tau0 / h + p0_dir,
            tau0 * (T::lit(4.0) * nb - nb2) / T::lit(2.0),
        ),
    };
    if alpha <= alpha_floor(tau0, h) {
        return None;
    }
    Some(QuadraticTerm {
        alpha,
        beta: num / (h * alpha),
    })
}

/// Non-factored upwind term for `tau1` at a node where `tau = tau0 * tau1`.
///
/// `nb` and `nb2` are travel times `tau` at the neighbors. With `tau0 = 1`
/// this is the ordinary eikonal stencil on `tau` itself.
pub fn plain_term<T: Real>(tau0: T, h: T, nb: T, nb2: Option<T>) -> Option<QuadraticTerm<T>> {
    let (alpha, beta) = match nb2 {
        None => (tau0 / h, nb / tau0),
        Some(nb2) => (
            T::lit(1.5) * tau0 / h,
            (T::lit(4.0) * nb - nb2) / (T::lit(3.0) * tau0),
        ),
    };
    if alpha <= alpha_floor(tau0, h) {
        return None;
    }
    Some(QuadraticTerm { alpha, beta })
}

/// Solution of the piecewise quadratic equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiecewiseSolution<T> {
    pub value: T,
    /// Bit `k` is set when term `k` is part of the final solve.
    pub retained: u8,
}

impl<T> PiecewiseSolution<T> {
    #[inline]
    pub fn retains(&self, k: usize) -> bool {
        self.retained & (1 << k) != 0
    }
}

/// Larger root of `sum alpha_k^2 (t - beta_k)^2 = kappa2` over the terms in
/// `mask`, or `None` when the discriminant is negative.
#[inline]
fn solve_subset<T: Real>(terms: &[QuadraticTerm<T>], mask: u8, kappa2: T) -> Option<T> {
    let mut a = T::zero();
    let mut b = T::zero();
    for (k, t) in terms.iter().enumerate() {
        if mask & (1 << k) != 0 {
            let w = t.alpha * t.alpha;
            a += w;
            b += w * t.beta;
        }
    }
    let center = b / a;
    // sum w (t - beta)^2 = a (t - center)^2 + sum w (beta - center)^2
    let mut spread = T::zero();
    for (k, t) in terms.iter().enumerate() {
        if mask & (1 << k) != 0 {
            let d = t.beta - center;
            spread += t.alpha * t.alpha * d * d;
        }
    }
    let rhs = (kappa2 - spread) / a;
    if rhs < T::zero() {
        return None;
    }
    Some(center + rhs.sqrt())
}

/// Solves `sum_k max(alpha_k (t - beta_k), 0)^2 = kappa2`.
///
/// All terms are tried first; while the root is invalid (some retained term
/// has `t <= beta_k`, or no real root exists) the remaining term with the
/// largest `beta` is removed. Returns `None` only for an empty term list.
pub fn solve_piecewise<T: Real>(terms: &[QuadraticTerm<T>], kappa2: T) -> Option<PiecewiseSolution<T>> {
    debug_assert!(terms.len() <= 8);
    let mut mask: u8 = if terms.len() >= 8 { u8::MAX } else { (1u8 << terms.len()) - 1 };
    while mask != 0 {
        if let Some(value) = solve_subset(terms, mask, kappa2) {
            let valid = terms
                .iter()
                .enumerate()
                .all(|(k, t)| mask & (1 << k) == 0 || value > t.beta);
            if valid {
                return Some(PiecewiseSolution {
                    value,
                    retained: mask,
                });
            }
        }
        let mut drop = None;
        for (k, t) in terms.iter().enumerate() {
            if mask & (1 << k) != 0 {
                match drop {
                    Some((_, beta)) if t.beta < beta => {}
                    _ => drop = Some((k, t.beta)),
                }
            }
        }
        let (k, _) = drop?;
        mask &= !(1 << k);
    }
    None
}
