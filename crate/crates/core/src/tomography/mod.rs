//! First-arrival travel-time tomography.
//!
//! The unknown is an unconstrained field `m'` mapped into `(m_low, m_high)` by
//! a tanh bound map. The objective is
//! `phi(m') = 1/2 sum_i |P^T tau^i(m) - d^i|^2 + alpha R(m')` with `m` the
//! bounded squared slowness, `tau^i = tau0^i tau1^i` the Fast Marching travel
//! times of source `i` and `P^T` the sampling at the receivers. It is
//! minimized by Gauss-Newton with a fixed number of CG steps per iteration
//! and backtracking line search.

mod regularization;
mod synthetic;

pub use regularization::{apply_laplacian, regularization, regularization_value};
pub use synthetic::{desk64, SyntheticProblem};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{domain, EikonalError, Result};
use crate::fm::{fm_solve, FmConfig, Mode};
use crate::grid::{build_distance_factor, RegularGrid, ScalarField, SourceSpec};
use crate::scalar::Real;
use crate::sensitivity::{assemble_operator, SensitivityOperator};

/// Row-major `n_src x n_rec` matrix of travel times.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix<T> {
    n_src: usize,
    n_rec: usize,
    values: Vec<T>,
}

impl<T: Real> DataMatrix<T> {
    pub fn new(n_src: usize, n_rec: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_src * n_rec {
            return domain(format!(
                "data matrix {n_src}x{n_rec} needs {} values, got {}",
                n_src * n_rec,
                values.len()
            ));
        }
        Ok(Self { n_src, n_rec, values })
    }

    pub fn zeros(n_src: usize, n_rec: usize) -> Self {
        Self {
            n_src,
            n_rec,
            values: vec![T::zero(); n_src * n_rec],
        }
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn n_rec(&self) -> usize {
        self.n_rec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_rec..(i + 1) * self.n_rec]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n_rec + j]
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if (self.n_src, self.n_rec) != (other.n_src, other.n_rec) {
            return domain("data matrices have different shapes");
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect();
        Self::new(self.n_src, self.n_rec, values)
    }

    /// `1/2 sum of squares`.
    pub fn half_norm2(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>() / T::lit(2.0)
    }
}

/// Source and receiver nodes. Every source is recorded by every receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub sources: Vec<SourceSpec>,
    pub receivers: Vec<usize>,
}

impl Geometry {
    pub fn validate<T: Real>(&self, grid: &RegularGrid<T>) -> Result<()> {
        if self.sources.is_empty() || self.receivers.is_empty() {
            return domain("a survey needs at least one source and one receiver");
        }
        for s in &self.sources {
            s.linear(grid)?;
        }
        if let Some(&r) = self.receivers.iter().find(|&&r| r >= grid.len()) {
            return domain(format!("receiver node {r} is outside the grid of {} nodes", grid.len()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Survey<T> {
    pub grid: RegularGrid<T>,
    pub geometry: Geometry,
    pub d_obs: DataMatrix<T>,
}

impl<T: Real> Survey<T> {
    pub fn new(grid: RegularGrid<T>, geometry: Geometry, d_obs: DataMatrix<T>) -> Result<Self> {
        geometry.validate(&grid)?;
        if d_obs.n_src() != geometry.sources.len() || d_obs.n_rec() != geometry.receivers.len() {
            return domain("observed data shape does not match the geometry");
        }
        if let Some(v) = d_obs.values().iter().find(|v| !v.is_finite() || **v < T::zero()) {
            return domain(format!("observed travel time {v} is not a finite non-negative number"));
        }
        Ok(Self { grid, geometry, d_obs })
    }
}

/// Travel times `tau0 * tau1` of every source sampled at the receivers.
pub fn forward_data<T: Real>(m: &ScalarField<T>, geometry: &Geometry, cfg: &FmConfig) -> Result<DataMatrix<T>> {
    let grid = *m.grid();
    geometry.validate(&grid)?;
    let rows: Vec<Vec<T>> = geometry
        .sources
        .par_iter()
        .map(|src| {
            let dist = build_distance_factor(&grid, src)?;
            let sol = fm_solve(&grid, m, src, &dist, cfg)?;
            Ok(geometry.receivers.iter().map(|&r| sol.tau[r]).collect())
        })
        .collect::<Result<_>>()?;
    DataMatrix::new(geometry.sources.len(), geometry.receivers.len(), rows.concat())
}

/// Noisy synthetic data: clean travel times plus white Gaussian noise with
/// standard deviation `noise_rel * mean(|clean|)`.
pub fn synthesize_survey<T: Real>(
    m_true: &ScalarField<T>,
    geometry: &Geometry,
    noise_rel: f64,
    seed: u64,
    cfg: &FmConfig,
) -> Result<Survey<T>> {
    if !(noise_rel >= 0.0) || !noise_rel.is_finite() {
        return domain(format!("noise level must be non-negative, got {noise_rel}"));
    }
    let clean = forward_data(m_true, geometry, cfg)?;
    let mean = clean.values().iter().map(|v| v.to_f64_lossy().abs()).sum::<f64>() / clean.values().len() as f64;
    let sigma = noise_rel * mean;
    let mut values = clean.values().to_vec();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| EikonalError::Domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut values {
            // keep observations physical
            *v = (*v + T::lit(normal.sample(&mut rng))).max(T::zero());
        }
    }
    Survey::new(*m_true.grid(), geometry.clone(), DataMatrix::new(clean.n_src(), clean.n_rec(), values)?)
}

/// Smooth bijection from the real line onto `(low, high)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundMap<T> {
    low: T,
    high: T,
}

impl<T: Real> BoundMap<T> {
    pub fn new(low: T, high: T) -> Result<Self> {
        if !(low > T::zero()) || !(high > low) || !high.is_finite() {
            return domain(format!("bounds must satisfy 0 < low < high, got ({low}, {high})"));
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> T {
        self.low
    }

    pub fn high(&self) -> T {
        self.high
    }

    fn mid(&self) -> T {
        (self.high + self.low) / T::lit(2.0)
    }

    fn half_width(&self) -> T {
        (self.high - self.low) / T::lit(2.0)
    }

    pub fn apply(&self, mp: T) -> T {
        let w = self.half_width();
        w * (((mp - self.mid()) / w).tanh() + T::one()) + self.low
    }

    pub fn deriv(&self, mp: T) -> T {
        let c = ((mp - self.mid()) / self.half_width()).cosh();
        T::one() / (c * c)
    }

    /// Preimage of `m`, which must lie strictly inside the bounds.
    pub fn inverse(&self, m: T) -> Result<T> {
        if !(m > self.low && m < self.high) {
            return domain(format!("{m} lies outside the open bound interval ({}, {})", self.low, self.high));
        }
        let w = self.half_width();
        Ok(self.mid() + w * ((m - self.low) / w - T::one()).atanh())
    }

    pub fn apply_field(&self, mp: &ScalarField<T>) -> ScalarField<T> {
        mp.map(|v| self.apply(v))
    }

    pub fn inverse_field(&self, m: &ScalarField<T>) -> Result<ScalarField<T>> {
        let values = m.values().iter().map(|&v| self.inverse(v)).collect::<Result<_>>()?;
        ScalarField::new(*m.grid(), values)
    }
}

#[derive(Clone, Debug)]
pub struct InversionConfig<T> {
    /// Regularization weight.
    pub alpha: T,
    /// Gauss-Newton iterations.
    pub n_gn: usize,
    /// CG steps per Gauss-Newton iteration.
    pub n_cg: usize,
    /// Step reduction factor of the line search.
    pub ls_factor: T,
    /// Maximum number of step reductions.
    pub ls_max_halvings: usize,
    /// Sufficient-decrease constant.
    pub armijo: T,
    pub bounds: BoundMap<T>,
    /// Reference squared slowness. Defaults to the initial model.
    pub m_ref: Option<ScalarField<T>>,
    pub fm: FmConfig,
}

impl<T: Real> InversionConfig<T> {
    pub fn new(bounds: BoundMap<T>) -> Self {
        Self {
            alpha: T::lit(0.5),
            n_gn: 10,
            n_cg: 8,
            ls_factor: T::lit(0.5),
            ls_max_halvings: 10,
            armijo: T::lit(1e-4),
            bounds,
            m_ref: None,
            fm: FmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= T::zero()) || !self.alpha.is_finite() {
            return domain("alpha must be finite and non-negative");
        }
        if self.n_gn == 0 || self.n_cg == 0 {
            return domain("n_gn and n_cg must be at least 1");
        }
        if !(self.ls_factor > T::zero() && self.ls_factor < T::one()) {
            return domain("line-search factor must lie in (0, 1)");
        }
        if !(self.armijo > T::zero() && self.armijo < T::one()) {
            return domain("Armijo constant must lie in (0, 1)");
        }
        if self.fm.mode != Mode::Factored {
            return domain("tomography runs the factored solver");
        }
        Ok(())
    }
}

/// Per-source data needed to apply the linearized forward map.
struct SourceLinearization<T> {
    op: SensitivityOperator<T>,
    /// `tau0` at the receivers.
    tau0_rec: Vec<T>,
}

/// Objective and its derivatives at one model, with everything needed to
/// apply the Gauss-Newton Hessian.
pub struct Linearization<'a, T> {
    problem: &'a Problem<'a, T>,
    pub mp: ScalarField<T>,
    /// Data misfit `1/2 sum |r|^2`.
    pub misfit: T,
    /// Penalty `R(m')` before weighting by alpha.
    pub reg: T,
    pub gradient: ScalarField<T>,
    pub residuals: DataMatrix<T>,
    bprime: Vec<T>,
    sources: Vec<SourceLinearization<T>>,
}

impl<T: Real> Linearization<'_, T> {
    pub fn objective(&self) -> T {
        self.misfit + self.problem.cfg.alpha * self.reg
    }

    /// `out = H v` with `H = sum_i Jt_i^T diag(tau0) P P^T diag(tau0) Jt_i + alpha L`
    /// and `Jt_i = J_i diag(b'(m'))`.
    pub fn hessian_apply(&self, v: &[T], out: &mut [T]) {
        let n = v.len();
        let receivers = &self.problem.survey.geometry.receivers;
        let w: Vec<T> = v.iter().zip(&self.bprime).map(|(&a, &b)| a * b).collect();
        let parts: Vec<Vec<T>> = self
            .sources
            .par_iter()
            .map(|s| {
                let mut e = vec![T::zero(); n];
                s.op.jacobian_into(&w, &mut e);
                let mut z = vec![T::zero(); n];
                for (&r, &t0) in receivers.iter().zip(&s.tau0_rec) {
                    z[r] += t0 * t0 * e[r];
                }
                s.op.jacobian_transpose_into(&z, &mut e);
                e
            })
            .collect();
        self.problem.laplacian(v, out);
        let alpha = self.problem.cfg.alpha;
        for (k, o) in out.iter_mut().enumerate() {
            let data: T = parts.iter().map(|p| p[k]).sum();
            *o = alpha * *o + self.bprime[k] * data;
        }
    }
}

/// A survey paired with an inversion configuration.
pub struct Problem<'a, T> {
    pub survey: &'a Survey<T>,
    pub cfg: &'a InversionConfig<T>,
    mp_ref: Vec<T>,
}

impl<'a, T: Real> Problem<'a, T> {
    /// Uses `cfg.m_ref` as reference when present. Without one the penalty is
    /// taken against a constant, which the Neumann Laplacian ignores.
    pub fn new(survey: &'a Survey<T>, cfg: &'a InversionConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let mp_ref = match &cfg.m_ref {
            Some(m) => {
                if m.grid() != &survey.grid {
                    return domain("reference model is defined on a different grid");
                }
                cfg.bounds.inverse_field(m)?.into_values()
            }
            None => vec![T::zero(); survey.grid.len()],
        };
        Ok(Self { survey, cfg, mp_ref })
    }

    fn with_reference(survey: &'a Survey<T>, cfg: &'a InversionConfig<T>, mp_ref: Vec<T>) -> Self {
        Self { survey, cfg, mp_ref }
    }

    fn laplacian(&self, v: &[T], out: &mut [T]) {
        apply_laplacian(&self.survey.grid, v, out);
    }

    fn check(&self, mp: &ScalarField<T>) -> Result<()> {
        if mp.grid() != &self.survey.grid {
            return domain("model is defined on a different grid than the survey");
        }
        if mp.values().iter().any(|v| !v.is_finite()) {
            return domain("model contains non-finite values");
        }
        Ok(())
    }

    /// `(misfit, R)` at `m'` without derivatives.
    pub fn value(&self, mp: &ScalarField<T>) -> Result<(T, T)> {
        self.check(mp)?;
        let m = self.cfg.bounds.apply_field(mp);
        let pred = forward_data(&m, &self.survey.geometry, &self.cfg.fm)?;
        let misfit = pred.sub(&self.survey.d_obs)?.half_norm2();
        let reg = regularization_value(&self.survey.grid, mp.values(), &self.mp_ref);
        Ok((misfit, reg))
    }

    pub fn objective_value(&self, mp: &ScalarField<T>) -> Result<T> {
        let (misfit, reg) = self.value(mp)?;
        Ok(misfit + self.cfg.alpha * reg)
    }

    /// Objective, gradient and sensitivity operators at `m'`.
    pub fn linearize(&self, mp: &ScalarField<T>) -> Result<Linearization<'_, T>> {
        self.check(mp)?;
        let grid = self.survey.grid;
        let n = grid.len();
        let bounds = self.cfg.bounds;
        let m = bounds.apply_field(mp);
        let bprime: Vec<T> = mp.values().iter().map(|&v| bounds.deriv(v)).collect();
        let geometry = &self.survey.geometry;

        let per_source: Vec<(SourceLinearization<T>, Vec<T>, Vec<T>)> = geometry
            .sources
            .par_iter()
            .enumerate()
            .map(|(i, src)| {
                let dist = build_distance_factor(&grid, src)?;
                let sol = fm_solve(&grid, &m, src, &dist, &self.cfg.fm)?;
                let op = assemble_operator(&sol, &dist)?;
                let obs = self.survey.d_obs.row(i);
                let residual: Vec<T> = geometry.receivers.iter().zip(obs).map(|(&r, &d)| sol.tau[r] - d).collect();
                let tau0_rec: Vec<T> = geometry.receivers.iter().map(|&r| dist.tau0[r]).collect();
                let mut z = vec![T::zero(); n];
                for ((&r, &t0), &res) in geometry.receivers.iter().zip(&tau0_rec).zip(&residual) {
                    z[r] += t0 * res;
                }
                let mut g = vec![T::zero(); n];
                op.jacobian_transpose_into(&z, &mut g);
                Ok((SourceLinearization { op, tau0_rec }, residual, g))
            })
            .collect::<Result<_>>()?;

        let mut data_grad = vec![T::zero(); n];
        let mut residuals = Vec::with_capacity(geometry.sources.len() * geometry.receivers.len());
        let mut sources = Vec::with_capacity(per_source.len());
        for (s, r, g) in per_source {
            for (acc, v) in data_grad.iter_mut().zip(&g) {
                *acc += *v;
            }
            residuals.extend(r);
            sources.push(s);
        }
        let residuals = DataMatrix::new(geometry.sources.len(), geometry.receivers.len(), residuals)?;
        let diff: Vec<T> = mp.values().iter().zip(&self.mp_ref).map(|(&a, &b)| a - b).collect();
        let mut reg_grad = vec![T::zero(); n];
        self.laplacian(&diff, &mut reg_grad);
        let alpha = self.cfg.alpha;
        let gradient: Vec<T> = (0..n).map(|k| bprime[k] * data_grad[k] + alpha * reg_grad[k]).collect();
        Ok(Linearization {
            problem: self,
            mp: mp.clone(),
            misfit: residuals.half_norm2(),
            reg: regularization_value(&grid, mp.values(), &self.mp_ref),
            gradient: ScalarField::new(grid, gradient)?,
            residuals,
            bprime,
            sources,
        })
    }
}

/// Objective value and gradient with respect to `m'`.
pub fn objective<T: Real>(
    mp: &ScalarField<T>,
    survey: &Survey<T>,
    cfg: &InversionConfig<T>,
) -> Result<(T, ScalarField<T>)> {
    let problem = Problem::new(survey, cfg)?;
    let lin = problem.linearize(mp)?;
    Ok((lin.objective(), lin.gradient))
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Approximately solves `H x = b` with `steps` CG iterations from `x = 0`.
pub fn conjugate_gradient<T: Real>(apply: impl Fn(&[T], &mut [T]), b: &[T], steps: usize) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut hp = vec![T::zero(); n];
    let mut rr = dot(&r, &r);
    let stop = rr * T::epsilon() * T::epsilon();
    for _ in 0..steps {
        if rr <= stop || rr == T::zero() {
            break;
        }
        apply(&p, &mut hp);
        let php = dot(&p, &hp);
        if !(php > T::zero()) {
            break;
        }
        let a = rr / php;
        for k in 0..n {
            x[k] += a * p[k];
            r[k] -= a * hp[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// All requested iterations were taken.
    Completed,
    /// The objective or its gradient vanished.
    Converged,
    /// No step length produced sufficient decrease; the best iterate is kept.
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub misfit: T,
    pub reg: T,
    pub objective: T,
    /// Accepted step length; zero for the initial model.
    pub mu: T,
}

#[derive(Clone, Debug)]
pub struct InversionResult<T> {
    pub m_final: ScalarField<T>,
    pub mp_final: ScalarField<T>,
    /// Starts with the initial model, then one entry per accepted step.
    pub history: Vec<IterationRecord<T>>,
    pub stop: StopReason,
}

/// Gauss-Newton minimization of the objective starting from `m'_init`.
pub fn gauss_newton<T: Real>(
    survey: &Survey<T>,
    cfg: &InversionConfig<T>,
    mp_init: &ScalarField<T>,
) -> Result<InversionResult<T>> {
    cfg.validate()?;
    let problem = match &cfg.m_ref {
        Some(_) => Problem::new(survey, cfg)?,
        None => Problem::with_reference(survey, cfg, mp_init.values().to_vec()),
    };
    let data_scale = survey.d_obs.half_norm2();
    let tiny_phi = (T::lit(100.0) * T::epsilon()).powi(2) * data_scale;

    let mut lin = problem.linearize(mp_init)?;
    let mut history = vec![IterationRecord {
        iteration: 0,
        misfit: lin.misfit,
        reg: lin.reg,
        objective: lin.objective(),
        mu: T::zero(),
    }];
    let mut stop = StopReason::Completed;
    for it in 1..=cfg.n_gn {
        let phi = lin.objective();
        let g = lin.gradient.values();
        let gnorm2 = dot(g, g);
        if phi <= tiny_phi || gnorm2 == T::zero() {
            stop = StopReason::Converged;
            break;
        }
        let rhs: Vec<T> = g.iter().map(|&v| -v).collect();
        let step = conjugate_gradient(|v, out| lin.hessian_apply(v, out), &rhs, cfg.n_cg);
        let slope = dot(g, &step);
        if !(slope < T::zero()) {
            stop = StopReason::LineSearchFailed;
            break;
        }
        let mut mu = T::one();
        let mut accepted = None;
        for _ in 0..=cfg.ls_max_halvings {
            let values = lin.mp.values().iter().zip(&step).map(|(&a, &d)| a + mu * d).collect();
            let trial = ScalarField::new(survey.grid, values)?;
            let phi_trial = problem.objective_value(&trial)?;
            if phi_trial <= phi + cfg.armijo * mu * slope {
                accepted = Some(trial);
                break;
            }
            mu *= cfg.ls_factor;
        }
        let Some(next) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        lin = problem.linearize(&next)?;
        history.push(IterationRecord {
            iteration: it,
            misfit: lin.misfit,
            reg: lin.reg,
            objective: lin.objective(),
            mu,
        });
    }
    Ok(InversionResult {
        m_final: cfg.bounds.apply_field(&lin.mp),
        mp_final: lin.mp,
        history,
        stop,
    })
}
