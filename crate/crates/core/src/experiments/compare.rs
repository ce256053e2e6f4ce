use serde::{Deserialize, Serialize};

use crate::capacity::{breakdown_profile, theoretical_cfb, Bounds, IntensityHistogram, WeibullParams};
use crate::error::Result;
use crate::estimators::{fit_cfb, plm_estimate_weighted, FitOptions, PlmCurve};
use crate::metrics::{error_report, ErrorReport, Reference};
use crate::synthetic::{generate_counts, pseudo_from_counts, GeneratorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub seed: u64,
    pub true_params: WeibullParams,
    pub bounds: Bounds,
    pub realized_total: u64,
    pub fit_params: WeibullParams,
    pub fit: ErrorReport,
    pub plm: ErrorReport,
    /// `plm / fit` per metric, in the order of the error report's CSV row.
    pub ratios: Vec<(String, f64)>,
}

/// Product-limit estimate from per-level breakdown counts on `bounds`; every
/// other record of the histogram is treated as censored.
pub fn plm_from_counts(hist: &IntensityHistogram, counts: &[u64], bounds: Bounds) -> Result<PlmCurve> {
    let failures: Vec<(u32, f64)> = bounds
        .levels()
        .into_iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(l, &c)| (l, c as f64))
        .collect();
    let censored: Vec<(u32, f64)> = hist
        .iter()
        .map(|(l, r)| {
            let b = if l >= bounds.min && l <= bounds.max {
                counts[(l - bounds.min) as usize]
            } else {
                0
            };
            (l, r.saturating_sub(b) as f64)
        })
        .collect();
    plm_estimate_weighted(&failures, &censored)
}

/// Both estimators on one pseudo-empirical replicate, judged against the
/// true distribution.
pub fn compare_methods(
    hist: &IntensityHistogram,
    true_params: WeibullParams,
    bounds: Bounds,
    seed: u64,
    opts: &FitOptions,
) -> Result<MethodComparison> {
    let profile = breakdown_profile(hist, &true_params, bounds);
    let counts = generate_counts(&profile, &GeneratorConfig::with_seed(seed))?;
    let pe = pseudo_from_counts(profile, counts);
    let reference = Reference::theoretical(hist, &true_params, bounds);
    let levels = bounds.levels();

    let fit = fit_cfb(hist, &pe.curve, bounds, opts)?;
    let fit_cdf: Vec<f64> = levels.iter().map(|&l| fit.params.cdf_at(l as f64)).collect();
    let fit_report = error_report(&fit.predicted_cfb, &fit_cdf, &reference)?;

    let plm = plm_from_counts(hist, &pe.counts, bounds)?;
    let plm_report = error_report(&theoretical_cfb(hist, &plm, bounds), &plm.cdf_on(bounds), &reference)?;

    let ratios = ErrorReport::CSV_HEADER[1..]
        .iter()
        .zip(plm_report.values().iter().zip(fit_report.values()))
        .map(|(n, (p, f))| (n.to_string(), p / f))
        .collect();

    Ok(MethodComparison {
        seed,
        true_params,
        bounds,
        realized_total: pe.realized_total,
        fit_params: fit.params,
        fit: fit_report,
        plm: plm_report,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::super::expected_bounds;
    use super::super::fixtures::*;
    use super::*;
    use crate::error::Error;

    #[test]
    fn deterministic_and_plm_worse() {
        let bounds = expected_bounds(demand(), &w150()).unwrap();
        let a = compare_methods(demand(), w150(), bounds, 11, &FitOptions::default()).unwrap();
        let b = compare_methods(demand(), w150(), bounds, 11, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.plm.awre_cdf > a.fit.awre_cdf, "{a:?}");
        assert_eq!(a.ratios.len(), 8);
    }

    #[test]
    fn zero_breakdowns_propagate_fit_error() {
        let bounds = Bounds::new(10, 20).unwrap();
        let hist: IntensityHistogram = vec![(12, 5)].into();
        let tiny = WeibullParams::new(1e6, 6.5).unwrap();
        assert!(matches!(
            compare_methods(&hist, tiny, bounds, 1, &FitOptions::default()),
            Err(Error::NoBreakdowns(_))
        ));
    }

    #[test]
    fn plm_input_excludes_failures_from_censored() {
        let hist: IntensityHistogram = vec![(10, 1), (15, 1), (20, 1)].into();
        let bounds = Bounds::new(10, 20).unwrap();
        let mut counts = vec![0; 11];
        counts[5] = 1;
        let plm = plm_from_counts(&hist, &counts, bounds).unwrap();
        assert_eq!(plm.at_risk, vec![2.0]);
        assert!((plm.survival_at(16.0) - 0.5).abs() < 1e-15);
    }
}
