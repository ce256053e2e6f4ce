use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::capacity::{Bounds, CapacityCdf, IntensityHistogram};
use crate::error::{Error, Result};

/// Product-limit (Kaplan-Meier) estimate of the capacity survival function.
///
/// `at_risk[k]` counts every record, censored or not, with intensity at or
/// above `levels[k]`. That treats each record as if it had passed through
/// all lower intensities, which traffic flow does not do; the estimator is
/// kept in that form because it is the baseline being compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlmCurve {
    /// Levels with a positive failure count, ascending.
    pub levels: Vec<u32>,
    pub at_risk: Vec<f64>,
    pub failures: Vec<f64>,
    /// Survival just above each level, `prod_{j <= k} (1 - d_j / n_j)`.
    pub survival: Vec<f64>,
    /// `1 - survival`, pointwise.
    pub cdf: Vec<f64>,
}

impl PlmCurve {
    /// Step survival at `intensity`: product over failure levels strictly below it.
    pub fn survival_at(&self, intensity: f64) -> f64 {
        let k = self.levels.partition_point(|&l| (l as f64) < intensity);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    pub fn cdf_at(&self, intensity: f64) -> f64 {
        1.0 - self.survival_at(intensity)
    }

    /// CDF sampled on every integer level of `bounds`.
    pub fn cdf_on(&self, bounds: Bounds) -> Vec<f64> {
        bounds.levels().into_iter().map(|l| self.cdf_at(l as f64)).collect()
    }
}

impl CapacityCdf for PlmCurve {
    fn cdf(&self, intensity: f64) -> f64 {
        self.cdf_at(intensity)
    }
}

/// Product-limit estimate from failure counts and a histogram of censored
/// records.
pub fn plm_estimate(failures: &[(u32, f64)], censored: &IntensityHistogram) -> Result<PlmCurve> {
    let weights: Vec<(u32, f64)> = censored.iter().map(|(l, c)| (l, c as f64)).collect();
    plm_estimate_weighted(failures, &weights)
}

/// As [`plm_estimate`], with real-valued censored weights so that expected
/// (fractional) breakdown counts can be fed in directly.
pub fn plm_estimate_weighted(failures: &[(u32, f64)], censored: &[(u32, f64)]) -> Result<PlmCurve> {
    let mut fail: BTreeMap<u32, f64> = BTreeMap::new();
    for &(level, d) in failures {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::InconsistentPlm {
                level,
                reason: format!("failure count {d} is negative or not finite"),
            });
        }
        *fail.entry(level).or_insert(0.0) += d;
    }
    let mut records: BTreeMap<u32, f64> = BTreeMap::new();
    for &(level, c) in censored {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InconsistentPlm {
                level,
                reason: format!("censored weight {c} is negative or not finite"),
            });
        }
        *records.entry(level).or_insert(0.0) += c;
    }
    for (&level, &d) in &fail {
        *records.entry(level).or_insert(0.0) += d;
    }

    // at-risk totals: suffix sums over all records
    let mut at_risk_by_level: BTreeMap<u32, f64> = BTreeMap::new();
    let mut acc = 0.0;
    for (&level, &r) in records.iter().rev() {
        acc += r;
        at_risk_by_level.insert(level, acc);
    }

    let mut curve = PlmCurve {
        levels: Vec::new(),
        at_risk: Vec::new(),
        failures: Vec::new(),
        survival: Vec::new(),
        cdf: Vec::new(),
    };
    let mut s = 1.0;
    for (&level, &d) in fail.iter().filter(|(_, &d)| d > 0.0) {
        let n = at_risk_by_level[&level];
        if n <= 0.0 {
            return Err(Error::InconsistentPlm {
                level,
                reason: "no records at risk".into(),
            });
        }
        if d > n * (1.0 + 1e-12) {
            return Err(Error::InconsistentPlm {
                level,
                reason: format!("{d} failures exceed {n} records at risk"),
            });
        }
        s *= (1.0 - d / n).max(0.0);
        curve.levels.push(level);
        curve.at_risk.push(n);
        curve.failures.push(d);
        curve.survival.push(s);
        curve.cdf.push(1.0 - s);
    }
    Ok(curve)
}
