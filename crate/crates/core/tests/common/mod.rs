//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use factored_eikonal::sensitivity::assemble_operator;
use factored_eikonal::{fm_solve_from_source, Field, FmConfig, Grid, Order, SourceSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Godunov update of one node from its smaller neighbor on every axis:
/// the largest root of `sum_j max(t - a_j, 0)^2 = h^2 m`.
fn godunov_update(mut a: Vec<f64>, hk: f64) -> f64 {
    a.sort_by(f64::total_cmp);
    let mut t = f64::INFINITY;
    for k in 1..=a.len() {
        let s = &a[..k];
        let n = k as f64;
        let sum: f64 = s.iter().sum();
        let sum2: f64 = s.iter().map(|v| v * v).sum();
        // n t^2 - 2 sum t + sum2 - hk^2 = 0
        let disc = sum * sum - n * (sum2 - hk * hk);
        if disc < 0.0 {
            break;
        }
        let root = (sum + disc.sqrt()) / n;
        if k == a.len() || root <= a[k] {
            t = root;
            break;
        }
    }
    t
}

/// Gauss-Seidel sweeps over all axis orderings until the largest change is
/// below 1e-14.
pub fn sweep_solve(grid: &Grid, m: &Field, src: usize) -> Vec<f64> {
    let n = grid.len();
    let dim = grid.dim();
    let counts = grid.counts().to_vec();
    let strides = grid.strides().to_vec();
    let h = grid.spacing();
    let mut tau = vec![f64::INFINITY; n];
    tau[src] = 0.0;
    loop {
        let mut change: f64 = 0.0;
        for dirs in 0..(1u32 << dim) {
            let mut idx = vec![0usize; dim];
            let total: usize = counts.iter().product();
            for step in 0..total {
                let mut r = step;
                for a in (0..dim).rev() {
                    let c = r % counts[a];
                    r /= counts[a];
                    idx[a] = if dirs & (1 << a) != 0 { counts[a] - 1 - c } else { c };
                }
                let k: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
                if k == src {
                    continue;
                }
                let mut a = Vec::new();
                for ax in 0..dim {
                    let st = strides[ax];
                    let mut best = f64::INFINITY;
                    if idx[ax] > 0 {
                        best = best.min(tau[k - st]);
                    }
                    if idx[ax] + 1 < counts[ax] {
                        best = best.min(tau[k + st]);
                    }
                    if best.is_finite() {
                        a.push(best);
                    }
                }
                if a.is_empty() {
                    continue;
                }
                let t = godunov_update(a, h * m[k].sqrt());
                if t < tau[k] {
                    let d = if tau[k].is_finite() { tau[k] - t } else { f64::INFINITY };
                    change = change.max(d);
                    tau[k] = t;
                }
            }
        }
        if change < 1e-14 {
            return tau;
        }
    }
}

pub fn random_problem(rng: &mut ChaCha8Rng, dim: usize, max_n: usize) -> (Grid, Field, SourceSpec) {
    let counts: Vec<usize> = (0..dim).map(|_| rng.random_range(3..=max_n)).collect();
    let h = rng.random_range(0.05..1.0);
    let grid = Grid::new(&counts, h, &vec![0.0; dim]).unwrap();
    let values = (0..grid.len()).map(|_| rng.random_range(0.3..3.0)).collect();
    let m = Field::new(grid, values).unwrap();
    let src: Vec<usize> = counts.iter().map(|&c| rng.random_range(0..c)).collect();
    (grid, m, SourceSpec::new(&src))
}

/// Largest difference between plain first-order FM and the sweeping oracle
/// over `trials` random problems.
pub fn sweeping_discrepancy(seed: u64, dim: usize, trials: usize, max_n: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (grid, m, src) = random_problem(&mut rng, dim, max_n);
        let (sol, _) = fm_solve_from_source(&m, &src, &FmConfig::plain(Order::First)).unwrap();
        let oracle = sweep_solve(&grid, &m, src.linear(&grid).unwrap());
        let diff = sol.tau.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    worst
}

/// Index of the first decrease in a sequence, if any.
pub fn first_decrease(seq: impl Iterator<Item = f64>) -> Option<usize> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in seq.enumerate() {
        if t < prev {
            return Some(i);
        }
        prev = t;
    }
    None
}

pub fn smooth_m(g: Grid, phase: f64) -> Field {
    Field::from_fn(g, |x| {
        let v = 1.5 + 0.3 * (1.1 * x[0] + phase).sin() * (0.8 * x[1]).cos() + 0.15 * x[1];
        1.0 / (v * v)
    })
}

pub fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sensitivity_configs() -> Vec<FmConfig> {
    vec![
        FmConfig::factored(Order::First),
        FmConfig::factored(Order::Second),
        FmConfig::factored(Order::Second).with_monotonicity(true),
    ]
}

/// Largest difference, relative to the solution size, between the
/// substitutions of J and J^T and a dense LU solve on a 9 x 9 grid.
pub fn dense_substitution_error(cfg: &FmConfig, seed: u64) -> f64 {
    let g = Grid::new(&[9, 9], 0.25, &[0.0, 0.0]).unwrap();
    let m = smooth_m(g, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sol, dist) = fm_solve_from_source(&m, &SourceSpec::new(&[2, 6]), cfg).unwrap();
    let op = assemble_operator(&sol, &dist).unwrap();
    let n = g.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (r, c, v) in op.triplets() {
        a[(r, c)] += v;
    }
    let lu = a.clone().lu();
    let lut = a.transpose().lu();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let v = random_vec(n, &mut rng);
        let vf = Field::new(g, v.clone()).unwrap();
        let dense = lu.solve(&DVector::from_vec(v.clone())).unwrap();
        let dense_t = lut.solve(&DVector::from_vec(v)).unwrap();
        let e = op.apply_jacobian(&vf).unwrap();
        let et = op.apply_jacobian_transpose(&vf).unwrap();
        let scale = dense.amax().max(1.0);
        let scale_t = dense_t.amax().max(1.0);
        for k in 0..n {
            worst = worst.max((e[k] - dense[k]).abs() / scale);
            worst = worst.max((et[k] - dense_t[k]).abs() / scale_t);
        }
    }
    worst
}

/// Largest relative mismatch of `<Jx, y>` and `<x, J^T y>` on a 17 x 17 grid.
pub fn adjoint_dot_error(cfg: &FmConfig, seed: u64) -> f64 {
    let g = Grid::new(&[17, 17], 0.125, &[0.0, 0.0]).unwrap();
    let m = smooth_m(g, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sol, dist) = fm_solve_from_source(&m, &SourceSpec::new(&[8, 3]), cfg).unwrap();
    let op = assemble_operator(&sol, &dist).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let x = Field::new(g, random_vec(g.len(), &mut rng)).unwrap();
        let y = Field::new(g, random_vec(g.len(), &mut rng)).unwrap();
        let lhs = dot(op.apply_jacobian(&x).unwrap().values(), y.values());
        let rhs = dot(x.values(), op.apply_jacobian_transpose(&y).unwrap().values());
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    worst
}

/// Outcome of one seeded finite-difference trial: `None` when the stencils
/// of the perturbed solves differ from the base solve.
pub fn directional_trial(seed: u64, order: Order) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Grid::new(&[21, 17], 0.1, &[0.0, 0.0]).unwrap();
    let phase = rng.random_range(0.0..6.0);
    let m = smooth_m(g, phase);
    let src = SourceSpec::new(&[rng.random_range(2..19), rng.random_range(2..15)]);
    let (c0, c1, w) = (
        rng.random_range(0.0..2.0),
        rng.random_range(0.0..1.6),
        rng.random_range(0.5..2.0),
    );
    let dm = Field::from_fn(g, |x| (-w * ((x[0] - c0).powi(2) + (x[1] - c1).powi(2))).exp());
    let cfg = FmConfig::factored(order);
    let (sol, dist) = fm_solve_from_source(&m, &src, &cfg).unwrap();
    let op = assemble_operator(&sol, &dist).unwrap();
    let jdm = op.apply_jacobian(&dm).unwrap();
    let jmax = jdm.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut worst: f64 = 0.0;
    for eps in [1e-5, 1e-6] {
        let mp = Field::new(g, m.values().iter().zip(dm.values()).map(|(a, b)| a + eps * b).collect()).unwrap();
        let (sp, _) = fm_solve_from_source(&mp, &src, &cfg).unwrap();
        if sp.stencils != sol.stencils {
            return None;
        }
        let err = (0..g.len())
            .map(|k| ((sp.tau1[k] - sol.tau1[k]) / eps - jdm[k]).abs())
            .fold(0.0f64, f64::max);
        worst = worst.max(err / jmax);
    }
    Some(worst)
}

/// Number of stencil-stable trials out of 20 and their largest error.
pub fn directional_summary(order: Order) -> (usize, f64) {
    let mut stable = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        if let Some(err) = directional_trial(seed, order) {
            stable += 1;
            worst = worst.max(err);
        }
    }
    (stable, worst)
}
