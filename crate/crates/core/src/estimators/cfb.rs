//! Weibull capacity fit by least squares on the cumulative frequency of
//! breakdowns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nelder_mead::{minimize, NelderMeadOptions};
use crate::capacity::{theoretical_cfb, Bounds, CfbCurve, IntensityHistogram, WeibullParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Starts per axis; the multi-start grid has `starts * starts` points.
    pub starts: usize,
    pub max_iterations: usize,
    pub f_abs_tol: f64,
    pub x_rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 5,
            max_iterations: 2000,
            f_abs_tol: 1e-10,
            x_rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: WeibullParams,
    /// Sum of squared differences between target and predicted CF_B.
    pub sse: f64,
    pub bounds: Bounds,
    pub predicted_cfb: CfbCurve,
    pub iterations: usize,
    pub converged: bool,
}

/// Squared-error objective over the integer grid of `bounds`.
pub struct CfbObjective {
    levels: Vec<f64>,
    records: Vec<f64>,
    target: Vec<f64>,
}

impl CfbObjective {
    pub fn new(hist: &IntensityHistogram, target: &CfbCurve, bounds: Bounds) -> Result<Self> {
        if target.levels != bounds.levels() {
            return Err(Error::GridMismatch);
        }
        Ok(CfbObjective {
            levels: target.levels.iter().map(|&l| l as f64).collect(),
            records: hist.dense(bounds),
            target: target.values.clone(),
        })
    }

    pub fn sse(&self, params: WeibullParams) -> f64 {
        let mut acc = 0.0;
        let mut sse = 0.0;
        for ((&level, &r), &t) in self.levels.iter().zip(&self.records).zip(&self.target) {
            if r > 0.0 {
                acc += r * params.cdf_at(level);
            }
            let d = t - acc;
            sse += d * d;
        }
        sse
    }

    fn sse_log(&self, x: &[f64]) -> f64 {
        self.sse(WeibullParams {
            scale: x[0].exp(),
            shape: x[1].exp(),
        })
    }
}

fn spaced(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

/// Multi-start grid: scales around the highest level where the target curve
/// still rises, shapes spread over 3..=11.
fn start_grid(target: &CfbCurve, starts: usize) -> Vec<(f64, f64)> {
    let mut top = target.levels[0];
    let mut prev = 0.0;
    for (&l, &v) in target.levels.iter().zip(&target.values) {
        if v > prev {
            top = l;
        }
        prev = v;
    }
    let top = top.max(1) as f64;
    let mut grid = Vec::with_capacity(starts * starts);
    for f in spaced(0.8, 1.2, starts) {
        for g in spaced(3.0, 11.0, starts) {
            grid.push((f * top, g));
        }
    }
    grid
}

/// Estimates Weibull capacity parameters whose predicted CF_B is closest,
/// in squared error, to `target` on the grid of `bounds`.
///
/// Nelder-Mead runs in `(ln scale, ln shape)` from every point of the start
/// grid; the best end point is then refined by one further run. Ties in the
/// objective go to the smaller scale, then the smaller shape.
pub fn fit_cfb(
    hist: &IntensityHistogram,
    target: &CfbCurve,
    bounds: Bounds,
    opts: &FitOptions,
) -> Result<FitResult> {
    if hist.is_empty() {
        return Err(Error::NoBreakdowns("demand histogram is empty"));
    }
    if target.values.iter().all(|&v| v == 0.0) {
        return Err(Error::NoBreakdowns("target curve is zero everywhere"));
    }
    let objective = CfbObjective::new(hist, target, bounds)?;
    let nm = NelderMeadOptions {
        max_iterations: opts.max_iterations,
        f_abs_tol: opts.f_abs_tol,
        x_rel_tol: opts.x_rel_tol,
        ..Default::default()
    };

    let runs: Vec<_> = start_grid(target, opts.starts.max(1))
        .into_par_iter()
        .map(|(scale, shape)| minimize(|x| objective.sse_log(x), &[scale.ln(), shape.ln()], &nm))
        .collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then(a.x[0].total_cmp(&b.x[0]))
                .then(a.x[1].total_cmp(&b.x[1]))
        })
        .expect("start grid is never empty");
    let polished = minimize(|x| objective.sse_log(x), &best.x, &nm);
    let (end, iterations) = if polished.value <= best.value {
        let it = best.iterations + polished.iterations;
        (polished, it)
    } else {
        let it = best.iterations;
        (best, it)
    };

    let params = WeibullParams::new(end.x[0].exp(), end.x[1].exp())?;
    Ok(FitResult {
        params,
        sse: objective.sse(params),
        bounds,
        predicted_cfb: theoretical_cfb(hist, &params, bounds),
        iterations,
        converged: end.converged,
    })
}
