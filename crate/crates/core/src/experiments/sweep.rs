use log::warn;
use serde::{Deserialize, Serialize};

use super::{expected_bounds, run_case, CaseSummary, ExperimentCase};
use crate::capacity::{IntensityHistogram, WeibullParams};
use crate::error::{Error, Result};
use crate::estimators::FitOptions;
use crate::synthetic::{expected_total, scale_demand};

/// A labelled true capacity distribution, e.g. `"2"` for the setting whose
/// breakdown probability is about half the base one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySetting {
    pub label: String,
    pub params: WeibullParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub setting: String,
    pub target_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub settings: Vec<CapacitySetting>,
    pub cases: Vec<SweepCase>,
    pub replicates: usize,
    pub base_seed: u64,
    /// Accepted relative miss of the expected breakdown total.
    pub tolerance: f64,
    pub max_factor: f64,
    pub fit: FitOptions,
}

fn setting(label: &str, scale: f64, shape: f64) -> CapacitySetting {
    CapacitySetting {
        label: label.into(),
        params: WeibullParams { scale, shape },
    }
}

fn cases(pairs: &[(&str, f64)]) -> Vec<SweepCase> {
    pairs
        .iter()
        .map(|&(s, t)| SweepCase {
            setting: s.into(),
            target_total: t,
        })
        .collect()
}

impl Default for SweepConfig {
    /// The full 17-case grid.
    fn default() -> Self {
        let mut grid = SweepConfig::table5();
        grid.cases.extend(cases(&[
            ("1", 12.0),
            ("1", 75.0),
            ("1", 150.0),
            ("1", 250.0),
            ("2", 75.0),
        ]));
        grid
    }
}

impl SweepConfig {
    /// Three capacity settings at four shared breakdown totals.
    pub fn table5() -> Self {
        let mut pairs = Vec::new();
        for total in [25.0, 50.0, 100.0, 200.0] {
            for s in ["1", "2", "8"] {
                pairs.push((s, total));
            }
        }
        SweepConfig {
            settings: vec![
                setting("1", 150.0, 6.5),
                setting("2", 160.0, 7.0),
                setting("8", 183.0, 7.5),
            ],
            cases: cases(&pairs),
            replicates: 15,
            base_seed: 1,
            tolerance: 0.05,
            max_factor: 1000.0,
            fit: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter {
                name: "replicates",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                value: self.tolerance,
                reason: "must lie in (0, 1)",
            });
        }
        Ok(())
    }
}

/// One row of the flat AWRE dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwreRow {
    pub tf_records: u64,
    pub bd_records: u64,
    pub awre_cf: f64,
    pub awre_cdf: f64,
    pub case_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub summaries: Vec<CaseSummary>,
    pub dataset: Vec<AwreRow>,
    pub skipped: Vec<String>,
}

/// Histogram scale factor whose expected breakdown total under `params` is
/// within `tolerance` of `target`. Rounding makes the total a step function
/// of the factor, so the proportional guess is refined by bisection.
pub fn find_scale_factor(
    hist: &IntensityHistogram,
    params: &WeibullParams,
    target: f64,
    tolerance: f64,
    max_factor: f64,
) -> Result<f64> {
    let base = expected_total(hist, params);
    if base <= 0.0 {
        return Err(Error::Bisection("no expected breakdowns at factor 1".into()));
    }
    let total_at = |f: f64| scale_demand(hist, f).map(|h| expected_total(&h, params));
    let miss = |t: f64| (t / target - 1.0).abs();

    let guess = target / base;
    if guess > max_factor {
        return Err(Error::Bisection(format!(
            "factor {guess:.3} needed for {target} breakdowns exceeds cap {max_factor}"
        )));
    }
    if miss(total_at(guess)?) <= tolerance {
        return Ok(guess);
    }
    let (mut lo, mut hi) = (guess * 0.25, (guess * 4.0).min(max_factor));
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let t = total_at(mid)?;
        if miss(t) <= tolerance {
            return Ok(mid);
        }
        if t < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Bisection(format!("no factor within {tolerance} of {target} breakdowns")))
}

/// Runs every configured case and flattens the replicates into the AWRE
/// dataset. Unreachable cases are skipped with a diagnostic.
pub fn sample_size_sweep(base: &IntensityHistogram, config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    for (k, spec) in config.cases.iter().enumerate() {
        let id = format!("{}_{}", spec.target_total.round() as u64, spec.setting);
        let Some(setting) = config.settings.iter().find(|s| s.label == spec.setting) else {
            return Err(Error::InvalidParameter {
                name: "setting",
                value: k as f64,
                reason: "case refers to an unknown capacity setting",
            });
        };
        let factor = match find_scale_factor(base, &setting.params, spec.target_total, config.tolerance, config.max_factor) {
            Ok(f) => f,
            Err(e) => {
                warn!("case {id} skipped: {e}");
                skipped.push(format!("{id}: {e}"));
                continue;
            }
        };
        let scaled = scale_demand(base, factor)?;
        let bounds = expected_bounds(&scaled, &setting.params)?;
        let mut case = ExperimentCase::new(
            id,
            factor,
            setting.params,
            config.base_seed + (k * config.replicates) as u64,
        );
        case.replicates = config.replicates;
        case.fit = config.fit;
        summaries.push(run_case(&case, base, bounds)?);
    }

    let dataset = summaries
        .iter()
        .flat_map(|s| {
            s.replicates.iter().map(move |r| AwreRow {
                tf_records: s.tf_records,
                bd_records: r.realized_queues,
                awre_cf: r.theoretical.awre_cf,
                awre_cdf: r.theoretical.awre_cdf,
                case_id: s.case.id.clone(),
                seed: r.seed,
            })
        })
        .collect();
    Ok(SweepResult {
        config: config.clone(),
        summaries,
        dataset,
        skipped,
    })
}
