use log::warn;
use serde::{Deserialize, Serialize};

use super::expected_bounds;
use crate::capacity::{theoretical_cfb, Bounds, IntensityHistogram, WeibullParams};
use crate::error::{Error, Result};
use crate::estimators::{fit_cfb, plm_estimate_weighted, FitOptions};
use crate::metrics::{error_report, ErrorReport, Reference};
use crate::synthetic::expected_total;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CensoringConfig {
    /// Censored fractions of all records, each in (0, 1).
    pub targets: Vec<f64>,
    /// Shape held fixed while the scale is solved for.
    pub shape: f64,
    /// Fixed evaluation bounds; derived per target when absent.
    pub bounds: Option<Bounds>,
    pub fit: FitOptions,
}

impl Default for CensoringConfig {
    fn default() -> Self {
        CensoringConfig {
            targets: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999],
            shape: 6.5,
            bounds: None,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringPoint {
    pub target: f64,
    /// `1 - sum(b) / records` under the solved parameters.
    pub achieved: f64,
    pub params: WeibullParams,
    pub bounds: Bounds,
    /// Product-limit estimate fed the theoretical expected counts.
    pub plm: ErrorReport,
    /// CF_B fit on the same theoretical curve.
    pub fit: ErrorReport,
    pub fit_params: WeibullParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringResult {
    pub config: CensoringConfig,
    pub points: Vec<CensoringPoint>,
    pub skipped: Vec<String>,
}

fn censoring_rate(hist: &IntensityHistogram, params: &WeibullParams) -> f64 {
    1.0 - expected_total(hist, params) / hist.total() as f64
}

/// Scale at which the expected censoring rate equals `target`, by bisection
/// on `ln(scale)`. The rate rises with the scale.
fn solve_scale(hist: &IntensityHistogram, shape: f64, target: f64) -> Result<WeibullParams> {
    let top = hist.max_level().unwrap_or(1).max(1) as f64;
    let rate = |ln_scale: f64| censoring_rate(hist, &WeibullParams { scale: ln_scale.exp(), shape });
    let (mut lo, mut hi) = ((1e-3 * top).ln(), (1e3 * top).ln());
    if !(rate(lo) < target && rate(hi) > target) {
        return Err(Error::Bisection(format!(
            "censoring rate {target} not reachable at shape {shape}"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    WeibullParams::new((0.5 * (lo + hi)).exp(), shape)
}

fn point(hist: &IntensityHistogram, target: f64, config: &CensoringConfig) -> Result<CensoringPoint> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter {
            name: "censoring target",
            value: target,
            reason: "must lie in (0, 1)",
        });
    }
    let params = solve_scale(hist, config.shape, target)?;
    let bounds = match config.bounds {
        Some(b) => b,
        None => expected_bounds(hist, &params)?,
    };
    let reference = Reference::theoretical(hist, &params, bounds);

    // every level of the histogram enters, with fractional failures b = r F
    let mut failures = Vec::new();
    let mut censored = Vec::new();
    for (level, r) in hist.iter() {
        let b = r as f64 * params.cdf_at(level as f64);
        failures.push((level, b));
        censored.push((level, (r as f64 - b).max(0.0)));
    }
    let plm = plm_estimate_weighted(&failures, &censored)?;
    let plm_report = error_report(&theoretical_cfb(hist, &plm, bounds), &plm.cdf_on(bounds), &reference)?;

    let fit = fit_cfb(hist, &reference.cfb, bounds, &config.fit)?;
    let fit_cdf: Vec<f64> = bounds.levels().iter().map(|&l| fit.params.cdf_at(l as f64)).collect();
    let fit_report = error_report(&fit.predicted_cfb, &fit_cdf, &reference)?;

    Ok(CensoringPoint {
        target,
        achieved: censoring_rate(hist, &params),
        params,
        bounds,
        plm: plm_report,
        fit: fit_report,
        fit_params: fit.params,
    })
}

/// PLM and CF_B-fit accuracy on noise-free input across censoring rates.
pub fn censoring_sweep(hist: &IntensityHistogram, config: &CensoringConfig) -> Result<CensoringResult> {
    if hist.is_empty() {
        return Err(Error::NoBreakdowns("demand histogram is empty"));
    }
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &target in &config.targets {
        match point(hist, target, config) {
            Ok(p) => points.push(p),
            Err(e @ Error::Bisection(_)) => {
                warn!("censoring target {target} skipped: {e}");
                skipped.push(format!("{target}: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(CensoringResult {
        config: config.clone(),
        points,
        skipped,
    })
}
