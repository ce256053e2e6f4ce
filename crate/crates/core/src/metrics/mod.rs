//! Accuracy measures for estimated CF_B curves and capacity CDFs.

mod ols;

pub use ols::{ols_fit, RegressionResult};

use serde::{Deserialize, Serialize};

use crate::capacity::{breakdown_profile, cumulative_frequency, Bounds, CapacityCdf, CfbCurve, IntensityHistogram};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveErrors {
    pub sse: f64,
    pub rsse: f64,
    pub mse: f64,
    pub rmse: f64,
}

pub fn curve_errors(estimate: &CfbCurve, reference: &CfbCurve) -> Result<CurveErrors> {
    if !estimate.same_grid(reference) || estimate.values.len() != reference.values.len() {
        return Err(Error::GridMismatch);
    }
    let sse: f64 = estimate
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mse = if estimate.values.is_empty() {
        0.0
    } else {
        sse / estimate.values.len() as f64
    };
    Ok(CurveErrors {
        sse,
        rsse: sse.sqrt(),
        mse,
        rmse: mse.sqrt(),
    })
}

/// Per-level `|est - ref| / ref`; `None` where the reference is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrors {
    pub values: Vec<Option<f64>>,
    pub excluded: usize,
}

pub fn relative_error_curve(estimate: &[f64], reference: &[f64]) -> Result<RelativeErrors> {
    if estimate.len() != reference.len() {
        return Err(Error::GridMismatch);
    }
    if reference.iter().all(|&r| r == 0.0) {
        return Err(Error::ZeroReference);
    }
    let values: Vec<Option<f64>> = estimate
        .iter()
        .zip(reference)
        .map(|(&e, &r)| (r != 0.0).then(|| ((e - r) / r).abs()))
        .collect();
    let excluded = values.iter().filter(|v| v.is_none()).count();
    Ok(RelativeErrors { values, excluded })
}

/// Mean relative error over the included levels.
pub fn are(re: &RelativeErrors) -> f64 {
    let (sum, n) = re
        .values
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Relative error averaged with weights, skipping excluded levels.
pub fn awre(re: &RelativeErrors, weights: &[f64]) -> Result<f64> {
    if weights.len() != re.values.len() {
        return Err(Error::GridMismatch);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (v, &w) in re.values.iter().zip(weights) {
        if w < 0.0 {
            return Err(Error::InvalidParameter {
                name: "weight",
                value: w,
                reason: "must be non-negative",
            });
        }
        if let Some(v) = v {
            num += w * v;
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroWeight);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Empirical,
    Theoretical,
}

/// True curves an estimate is judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub kind: ReferenceKind,
    pub cfb: CfbCurve,
    pub cdf: Vec<f64>,
    /// Expected breakdowns per level, used as AWRE weights.
    pub weights: Vec<f64>,
}

impl Reference {
    pub fn theoretical(hist: &IntensityHistogram, truth: &impl CapacityCdf, bounds: Bounds) -> Self {
        let profile = breakdown_profile(hist, truth, bounds);
        Reference {
            kind: ReferenceKind::Theoretical,
            cdf: bounds.levels().iter().map(|&l| truth.cdf(l as f64)).collect(),
            cfb: cumulative_frequency(&profile),
            weights: profile.b_bar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub sse: f64,
    pub rsse: f64,
    pub mse: f64,
    pub rmse: f64,
    pub are_cf: f64,
    pub awre_cf: f64,
    pub are_cdf: f64,
    pub awre_cdf: f64,
    pub reference_kind: ReferenceKind,
    pub excluded_cf: usize,
    pub excluded_cdf: usize,
}

impl ErrorReport {
    pub const CSV_HEADER: [&'static str; 9] = [
        "method", "sse_cf", "rsse_cf", "mse_cf", "rmse_cf", "are_cf", "awre_cf", "are_cdf", "awre_cdf",
    ];

    /// Metric values in [`Self::CSV_HEADER`] order, without the label.
    pub fn values(&self) -> [f64; 8] {
        [
            self.sse,
            self.rsse,
            self.mse,
            self.rmse,
            self.are_cf,
            self.awre_cf,
            self.are_cdf,
            self.awre_cdf,
        ]
    }

    pub fn csv_row(&self, label: &str) -> Vec<String> {
        std::iter::once(label.to_string())
            .chain(self.values().iter().map(|v| v.to_string()))
            .collect()
    }
}

/// Full error bundle of an estimated CF_B and CDF against a reference.
pub fn error_report(estimate_cfb: &CfbCurve, estimate_cdf: &[f64], reference: &Reference) -> Result<ErrorReport> {
    let abs = curve_errors(estimate_cfb, &reference.cfb)?;
    let re_cf = relative_error_curve(&estimate_cfb.values, &reference.cfb.values)?;
    let re_cdf = relative_error_curve(estimate_cdf, &reference.cdf)?;
    Ok(ErrorReport {
        sse: abs.sse,
        rsse: abs.rsse,
        mse: abs.mse,
        rmse: abs.rmse,
        are_cf: are(&re_cf),
        awre_cf: awre(&re_cf, &reference.weights)?,
        are_cdf: are(&re_cdf),
        awre_cdf: awre(&re_cdf, &reference.weights)?,
        reference_kind: reference.kind,
        excluded_cf: re_cf.excluded,
        excluded_cdf: re_cdf.excluded,
    })
}
