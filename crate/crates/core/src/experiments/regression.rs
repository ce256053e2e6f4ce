use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::AwreRow;
use crate::error::{Error, Result};
use crate::metrics::{ols_fit, RegressionResult};

/// Explanatory variables: record counts, their ratio, and the logs of all three.
pub const VARIABLES: [&str; 6] = ["tf", "bd", "bd_per_tf", "ln_tf", "ln_bd", "ln_bd_per_tf"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionConfig {
    /// Largest p-value at which a coefficient counts as significant.
    pub significance: f64,
    /// Variable sets to try; every non-empty subset of [`VARIABLES`] when empty.
    pub candidates: Vec<Vec<String>>,
    pub min_rows: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            significance: 0.1,
            candidates: Vec::new(),
            min_rows: 30,
        }
    }
}

/// Every non-empty subset of [`VARIABLES`], smallest first.
pub fn candidate_sets() -> Vec<Vec<String>> {
    let mut sets: Vec<Vec<String>> = (1u32..1 << VARIABLES.len())
        .map(|mask| {
            VARIABLES
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, v)| v.to_string())
                .collect()
        })
        .collect();
    sets.sort_by_key(|s| s.len());
    sets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub variables: Vec<String>,
    pub result: Option<RegressionResult>,
    /// All slope coefficients significant; the intercept is not required to be.
    pub all_significant: bool,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub response: String,
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub candidates: Vec<CandidateFit>,
    /// Index of the highest-R² candidate among those with all variables significant.
    pub best: Option<usize>,
}

impl RegressionReport {
    pub fn best_fit(&self) -> Option<&CandidateFit> {
        self.best.map(|i| &self.candidates[i])
    }

    pub fn find(&self, variables: &[&str]) -> Option<&CandidateFit> {
        self.candidates.iter().find(|c| c.variables == variables)
    }
}

fn column(name: &str, rows: &[&AwreRow]) -> Result<Vec<f64>> {
    let f = |r: &AwreRow| {
        let (tf, bd) = (r.tf_records as f64, r.bd_records as f64);
        match name {
            "tf" => Some(tf),
            "bd" => Some(bd),
            "bd_per_tf" => Some(bd / tf),
            "ln_tf" => Some(tf.ln()),
            "ln_bd" => Some(bd.ln()),
            "ln_bd_per_tf" => Some((bd / tf).ln()),
            _ => None,
        }
    };
    rows.iter()
        .map(|r| {
            f(r).ok_or(Error::InvalidParameter {
                name: "regression variable",
                value: f64::NAN,
                reason: "unknown variable name",
            })
        })
        .collect()
}

fn fit_response(
    response: &str,
    rows: &[&AwreRow],
    dropped: usize,
    candidates: &[Vec<String>],
    significance: f64,
) -> Result<RegressionReport> {
    let y: Vec<f64> = rows
        .iter()
        .map(|r| if response == "awre_cf" { r.awre_cf } else { r.awre_cdf })
        .collect();
    let mut fits = Vec::with_capacity(candidates.len());
    for vars in candidates {
        let columns = vars
            .iter()
            .map(|v| Ok((v.clone(), column(v, rows)?)))
            .collect::<Result<Vec<_>>>()?;
        match ols_fit(&columns, &y, true) {
            Ok(result) => {
                let all_significant = result.p_values[1..].iter().all(|&p| p < significance);
                fits.push(CandidateFit {
                    variables: vars.clone(),
                    result: Some(result),
                    all_significant,
                    diagnostic: None,
                });
            }
            Err(e @ (Error::RankDeficient(_) | Error::TooFewRows { .. })) => {
                info!("{response} ~ {vars:?} skipped: {e}");
                fits.push(CandidateFit {
                    variables: vars.clone(),
                    result: None,
                    all_significant: false,
                    diagnostic: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let best = fits
        .iter()
        .enumerate()
        .filter(|(_, c)| c.all_significant)
        .max_by(|(ia, a), (ib, b)| {
            let ra = a.result.as_ref().map_or(0.0, |r| r.r_squared);
            let rb = b.result.as_ref().map_or(0.0, |r| r.r_squared);
            // on equal R² prefer the earlier (smaller) model
            ra.total_cmp(&rb).then(ib.cmp(ia))
        })
        .map(|(i, _)| i);
    Ok(RegressionReport {
        response: response.into(),
        rows_used: rows.len(),
        rows_dropped: dropped,
        candidates: fits,
        best,
    })
}

/// Fits every candidate model to both AWRE responses (CDF first, then CF).
/// Rows with zero breakdowns are dropped since their logs are undefined.
pub fn awre_regression(dataset: &[AwreRow], config: &RegressionConfig) -> Result<Vec<RegressionReport>> {
    let rows: Vec<&AwreRow> = dataset.iter().filter(|r| r.bd_records > 0 && r.tf_records > 0).collect();
    let dropped = dataset.len() - rows.len();
    if dropped > 0 {
        warn!("{dropped} rows without breakdowns left out of the regression");
    }
    if rows.len() < config.min_rows {
        return Err(Error::TooFewRows {
            rows: rows.len(),
            cols: config.min_rows,
        });
    }
    let candidates = if config.candidates.is_empty() {
        candidate_sets()
    } else {
        config.candidates.clone()
    };
    ["awre_cdf", "awre_cf"]
        .iter()
        .map(|resp| fit_response(resp, &rows, dropped, &candidates, config.significance))
        .collect()
}
