//! Monte-Carlo studies of estimator accuracy on pseudo-empirical data.
//!
//! Every study is a pure function of its configuration; replicate `i` of a
//! case always uses seed `base_seed + i`, and parallel runs are merged back in
//! case and replicate order, so results are bit-identical across runs.

mod censoring;
mod compare;
mod regression;
mod sweep;

pub use censoring::{censoring_sweep, CensoringConfig, CensoringPoint, CensoringResult};
pub use compare::{compare_methods, plm_from_counts, MethodComparison};
pub use regression::{awre_regression, candidate_sets, CandidateFit, RegressionConfig, RegressionReport};
pub use sweep::{
    find_scale_factor, sample_size_sweep, AwreRow, CapacitySetting, SweepCase, SweepConfig, SweepResult,
};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{breakdown_profile, theoretical_cfb, Bounds, IntensityHistogram, WeibullParams};
use crate::error::{Error, Result};
use crate::estimators::{default_bounds, fit_cfb, FitOptions};
use crate::metrics::{curve_errors, error_report, ErrorReport, Reference, ReferenceKind};
use crate::synthetic::{
    calibrate_peak, generate_counts, pseudo_from_counts, rounded_counts,
    synth_demand_profile, GeneratorConfig,
};

/// Surrogate free-flow demand used when no real intensity records are at
/// hand. The peak is tuned so that `calibrate_params` yields
/// `calibrate_total` expected breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateDemand {
    pub total_records: u64,
    pub spread: f64,
    pub seed: u64,
    pub calibrate_params: WeibullParams,
    pub calibrate_total: f64,
}

impl Default for SurrogateDemand {
    fn default() -> Self {
        SurrogateDemand {
            total_records: 6486,
            spread: 0.5,
            seed: 2016,
            calibrate_params: WeibullParams {
                scale: 150.0,
                shape: 6.5,
            },
            calibrate_total: 51.4,
        }
    }
}

impl SurrogateDemand {
    /// Calibrated peak and the resulting histogram.
    pub fn build(&self) -> Result<(f64, IntensityHistogram)> {
        let peak = calibrate_peak(
            self.total_records,
            self.spread,
            self.seed,
            &self.calibrate_params,
            self.calibrate_total,
        )?;
        Ok((peak, synth_demand_profile(self.total_records, peak, self.spread, self.seed)?))
    }
}

/// Bounds for synthetic studies, following the data-driven rule with the
/// "lowest breakdown flow" replaced by the first level at which the
/// theoretical CF_B reaches half a breakdown.
pub fn expected_bounds(hist: &IntensityHistogram, params: &WeibullParams) -> Result<Bounds> {
    let (Some(lo), Some(hi)) = (hist.min_level(), hist.max_level()) else {
        return Err(Error::NoBreakdowns("demand histogram is empty"));
    };
    let full = Bounds::new(lo, hi.max(lo + 1))?;
    let curve = theoretical_cfb(hist, params, full);
    let first = curve
        .levels
        .iter()
        .zip(&curve.values)
        .find(|(_, &v)| v >= 0.5)
        .map(|(&l, _)| l)
        .ok_or(Error::NoBreakdowns("fewer than 0.5 expected breakdowns in total"))?;
    default_bounds(hist, &[first])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCase {
    pub id: String,
    pub scale_factor: f64,
    pub params: WeibullParams,
    pub replicates: usize,
    pub base_seed: u64,
    /// Use rounded expected counts instead of random draws.
    #[serde(default)]
    pub noise_free: bool,
    #[serde(default)]
    pub fit: FitOptions,
}

impl ExperimentCase {
    pub fn new(id: impl Into<String>, scale_factor: f64, params: WeibullParams, base_seed: u64) -> Self {
        ExperimentCase {
            id: id.into(),
            scale_factor,
            params,
            replicates: 15,
            base_seed,
            noise_free: false,
            fit: FitOptions::default(),
        }
    }
}

/// One replicate of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub realized_queues: u64,
    pub estimate: WeibullParams,
    pub converged: bool,
    pub iterations: usize,
    pub rsse_empirical: f64,
    pub rsse_true: f64,
    /// Errors against the pseudo-empirical curve and per-level empirical
    /// breakdown fractions.
    pub empirical: ErrorReport,
    /// Errors against the true curve and CDF.
    pub theoretical: ErrorReport,
}

impl ReplicateRecord {
    /// Summary variables in table order.
    pub const VARIABLES: [&'static str; 9] = [
        "realized_queues",
        "scale",
        "shape",
        "rsse_empirical",
        "rsse_true",
        "are_cf",
        "awre_cf",
        "are_cdf",
        "awre_cdf",
    ];

    pub fn values(&self) -> [f64; 9] {
        let t = &self.theoretical;
        [
            self.realized_queues as f64,
            self.estimate.scale,
            self.estimate.shape,
            self.rsse_empirical,
            self.rsse_true,
            t.are_cf,
            t.awre_cf,
            t.are_cdf,
            t.awre_cdf,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for one replicate.
    pub sd: f64,
    pub max: f64,
}

impl VariableSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        VariableSummary {
            mean,
            sd,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: ExperimentCase,
    pub bounds: Bounds,
    pub tf_records: u64,
    pub theoretical_queues: f64,
    pub replicates: Vec<ReplicateRecord>,
    /// Aligned with [`ReplicateRecord::VARIABLES`].
    pub summary: Vec<VariableSummary>,
    pub non_converged: usize,
}

impl CaseSummary {
    pub fn stat(&self, variable: &str) -> Option<VariableSummary> {
        ReplicateRecord::VARIABLES
            .iter()
            .position(|&v| v == variable)
            .map(|i| self.summary[i])
    }

    /// Mean, SD and max per variable recomputed from the replicate rows.
    pub fn recompute(replicates: &[ReplicateRecord]) -> Vec<VariableSummary> {
        let rows: Vec<[f64; 9]> = replicates.iter().map(ReplicateRecord::values).collect();
        (0..ReplicateRecord::VARIABLES.len())
            .map(|i| VariableSummary::of(&rows.iter().map(|r| r[i]).collect::<Vec<_>>()))
            .collect()
    }
}

/// Per-level empirical breakdown fraction `b_j / r_j`, 0 where `r_j = 0`.
fn empirical_cdf(hist: &IntensityHistogram, counts: &[u64], bounds: Bounds) -> Vec<f64> {
    hist.dense(bounds)
        .iter()
        .zip(counts)
        .map(|(&r, &b)| if r > 0.0 { b as f64 / r } else { 0.0 })
        .collect()
}

/// Runs every replicate of `case` on `hist` scaled by the case factor.
pub fn run_case(case: &ExperimentCase, hist: &IntensityHistogram, bounds: Bounds) -> Result<CaseSummary> {
    if case.replicates == 0 {
        return Err(Error::InvalidParameter {
            name: "replicates",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let scaled = crate::synthetic::scale_demand(hist, case.scale_factor)?;
    let profile = breakdown_profile(&scaled, &case.params, bounds);
    let reference = Reference::theoretical(&scaled, &case.params, bounds);
    let levels = bounds.levels();

    let replicates: Vec<ReplicateRecord> = (0..case.replicates)
        .into_par_iter()
        .map(|i| -> Result<ReplicateRecord> {
            let seed = case.base_seed.wrapping_add(i as u64);
            let counts = if case.noise_free {
                rounded_counts(&profile)
            } else {
                generate_counts(&profile, &GeneratorConfig::with_seed(seed))?
            };
            let pe = pseudo_from_counts(profile.clone(), counts);
            let fit = fit_cfb(&scaled, &pe.curve, bounds, &case.fit)?;
            let est_cdf: Vec<f64> = levels.iter().map(|&l| fit.params.cdf_at(l as f64)).collect();
            let theoretical = error_report(&fit.predicted_cfb, &est_cdf, &reference)?;
            let empirical_ref = Reference {
                kind: ReferenceKind::Empirical,
                cdf: empirical_cdf(&scaled, &pe.counts, bounds),
                weights: pe.counts.iter().map(|&c| c as f64).collect(),
                cfb: pe.curve.clone(),
            };
            let empirical = error_report(&fit.predicted_cfb, &est_cdf, &empirical_ref)?;
            Ok(ReplicateRecord {
                replicate: i,
                seed,
                realized_queues: pe.realized_total,
                estimate: fit.params,
                converged: fit.converged,
                iterations: fit.iterations,
                rsse_empirical: curve_errors(&fit.predicted_cfb, &pe.curve)?.rsse,
                rsse_true: theoretical.rsse,
                empirical,
                theoretical,
            })
        })
        .collect::<Result<_>>()?;

    let non_converged = replicates.iter().filter(|r| !r.converged).count();
    if non_converged > 0 {
        warn!("case {}: {non_converged} fits hit the iteration cap", case.id);
    }
    Ok(CaseSummary {
        summary: CaseSummary::recompute(&replicates),
        case: case.clone(),
        bounds,
        tf_records: scaled.total(),
        theoretical_queues: profile.total(),
        replicates,
        non_converged,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::synthetic::expected_total;

    #[test]
    fn surrogate_is_calibrated() {
        let hist = demand();
        assert_eq!(hist.total(), 6486);
        assert!((expected_total(hist, &w150()) - 51.4).abs() < 0.01);
    }

    #[test]
    fn expected_bounds_cover_the_breakdown_range() {
        let b = expected_bounds(demand(), &w150()).unwrap();
        assert!(b.min > 20 && b.min < demand().max_level().unwrap(), "{b:?}");
        assert_eq!(b.max, (110 * demand().max_level().unwrap()).div_ceil(100));
    }

    #[test]
    fn noise_free_case_recovers_truth() {
        let hist = demand();
        let bounds = expected_bounds(hist, &w150()).unwrap();
        let mut case = ExperimentCase::new("nf", 1.0, w150(), 7);
        case.replicates = 1;
        case.noise_free = true;
        let s = run_case(&case, hist, bounds).unwrap();
        assert!(s.replicates[0].theoretical.awre_cdf <= 0.02, "{:?}", s.replicates[0]);
    }

    #[test]
    fn summary_matches_rows_and_is_deterministic() {
        let hist = demand();
        let bounds = expected_bounds(hist, &w150()).unwrap();
        let mut case = ExperimentCase::new("50_1", 1.0, w150(), 100);
        case.replicates = 4;
        let a = run_case(&case, hist, bounds).unwrap();
        assert_eq!(a.summary, CaseSummary::recompute(&a.replicates));
        assert_eq!(a.replicates.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![100, 101, 102, 103]);
        let b = run_case(&case, hist, bounds).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn summary_statistics() {
        let s = VariableSummary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.max, 4.0);
        assert_eq!(VariableSummary::of(&[3.0]).sd, 0.0);
    }
}
