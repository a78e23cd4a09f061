//! Convergence studies and machine-relative timing.

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticCase;
use crate::error::{domain, EikonalError, Result};
use crate::fm::{fm_solve, FmConfig, Order};
use crate::grid::{build_distance_factor, linf_error, mean_l2_error, RegularGrid, ScalarField};

/// Time of one residual evaluation of `|grad tau|^2 - m` over a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkUnit {
    pub seconds: f64,
}

impl WorkUnit {
    pub fn units(&self, seconds: f64) -> f64 {
        seconds / self.seconds
    }
}

/// Writes `|grad tau|^2 - m` with central differences into `out`. Boundary
/// nodes use one-sided differences.
pub fn eikonal_residual(grid: &RegularGrid<f64>, tau: &[f64], m: &[f64], out: &mut [f64]) {
    let dim = grid.dim();
    let counts = grid.counts();
    let strides = grid.strides();
    let inv2h = 0.5 / grid.spacing();
    let invh = 1.0 / grid.spacing();
    for (k, o) in out.iter_mut().enumerate() {
        let idx = grid.delinearize(k);
        let mut g2 = 0.0;
        for axis in 0..dim {
            let st = strides[axis];
            let i = idx[axis];
            let d = if i == 0 {
                (tau[k + st] - tau[k]) * invh
            } else if i + 1 == counts[axis] {
                (tau[k] - tau[k - st]) * invh
            } else {
                (tau[k + st] - tau[k - st]) * inv2h
            };
            g2 += d * d;
        }
        *o = g2 - m[k];
    }
}

/// Median time over five residual evaluations after one warm-up pass. The
/// input fields and the output buffer are allocated before timing.
pub fn measure_work_unit(grid: &RegularGrid<f64>) -> WorkUnit {
    let c = grid.coord(grid.len() / 2);
    let tau: Vec<f64> = (0..grid.len())
        .map(|k| {
            let x = grid.coord(k);
            x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        })
        .collect();
    let m = vec![1.0; grid.len()];
    let mut out = vec![0.0; grid.len()];
    eikonal_residual(grid, &tau, &m, &mut out);
    let mut times: Vec<f64> = (0..5)
        .map(|_| {
            let t = Instant::now();
            eikonal_residual(grid, std::hint::black_box(&tau), &m, &mut out);
            std::hint::black_box(&out);
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    WorkUnit {
        seconds: times[2].max(1e-9),
    }
}

/// One solve of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    /// Grid size written as `n1xn2[xn3]`.
    pub n: String,
    pub order: u8,
    pub linf: f64,
    pub mean_l2: f64,
    pub seconds: f64,
    pub work_units: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

/// Least-squares slope of `log2(err)` against `log2(h)`; `None` with fewer
/// than two distinct spacings.
pub fn fitted_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(h, e)| (h.log2(), e.log2())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

impl ConvergenceReport {
    /// Fitted slopes of `(linf, mean_l2)` for one order.
    pub fn slopes(&self, order: u8) -> (Option<f64>, Option<f64>) {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.order == order).collect();
        let linf: Vec<_> = rows.iter().map(|r| (r.h, r.linf)).collect();
        let l2: Vec<_> = rows.iter().map(|r| (r.h, r.mean_l2)).collect();
        (fitted_slope(&linf), fitted_slope(&l2))
    }

    pub fn orders(&self) -> Vec<u8> {
        let mut o: Vec<u8> = self.rows.iter().map(|r| r.order).collect();
        o.sort_unstable();
        o.dedup();
        o
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(["h", "n", "order", "linf", "mean_l2", "seconds", "work_units"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let expected = ["h", "n", "order", "linf", "mean_l2", "seconds", "work_units"];
        if r.headers()?.iter().ne(expected) {
            return Err(EikonalError::Format(format!("report header must be {}", expected.join(","))));
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<ConvergenceRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// Solves an analytic case on every spacing in `hs` (largest first) with
/// each order and records the travel-time errors.
pub fn convergence_study(case: &AnalyticCase<f64>, hs: &[f64], orders: &[Order]) -> Result<ConvergenceReport> {
    if hs.is_empty() || orders.is_empty() {
        return domain("a convergence study needs at least one spacing and one order");
    }
    let mut hs = hs.to_vec();
    hs.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::new();
    for &h in &hs {
        let grid = case.grid(h)?;
        let exact = case.eval(&grid)?;
        let unit = measure_work_unit(&grid);
        let n = grid.counts().iter().map(|c| c.to_string()).collect::<Vec<_>>().join("x");
        for &order in orders {
            let t = Instant::now();
            let dist = build_distance_factor(&grid, &exact.source)?;
            let sol = fm_solve(&grid, &exact.m, &exact.source, &dist, &FmConfig::factored(order))?;
            let seconds = t.elapsed().as_secs_f64();
            rows.push(ConvergenceRow {
                h,
                n: n.clone(),
                order: order.as_u8(),
                linf: linf_error(&sol.tau, &exact.tau)?,
                mean_l2: mean_l2_error(&sol.tau, &exact.tau)?,
                seconds,
                work_units: unit.units(seconds),
            });
        }
    }
    Ok(ConvergenceReport { rows })
}

/// Errors of one factored solve against an analytic case.
pub fn solve_errors(case: &AnalyticCase<f64>, h: f64, cfg: &FmConfig) -> Result<(ScalarField<f64>, f64, f64)> {
    let grid = case.grid(h)?;
    let exact = case.eval(&grid)?;
    let dist = build_distance_factor(&grid, &exact.source)?;
    let sol = fm_solve(&grid, &exact.m, &exact.source, &dist, cfg)?;
    let linf = linf_error(&sol.tau, &exact.tau)?;
    let l2 = mean_l2_error(&sol.tau, &exact.tau)?;
    Ok((sol.tau, linf, l2))
}
