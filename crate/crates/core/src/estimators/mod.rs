//! Capacity distribution estimators: the product-limit baseline and the
//! cumulative-frequency fit.

mod cfb;
pub mod nelder_mead;
mod plm;

pub use cfb::{fit_cfb, CfbObjective, FitOptions, FitResult};
pub use plm::{plm_estimate, plm_estimate_weighted, PlmCurve};

use crate::capacity::{Bounds, IntensityHistogram};
use crate::error::{Error, Result};

/// Optimization bounds from the data: 75 % of the lowest breakdown flow and
/// 110 % of the highest recorded intensity (censored or breakdown).
pub fn default_bounds(hist: &IntensityHistogram, breakdown_flows: &[u32]) -> Result<Bounds> {
    let Some(&lowest) = breakdown_flows.iter().min() else {
        return Err(Error::NoBreakdowns("supply explicit bounds (--imin/--imax)"));
    };
    let highest = hist
        .max_level()
        .into_iter()
        .chain(breakdown_flows.iter().copied())
        .max()
        .expect("at least one breakdown flow");
    // integer arithmetic keeps e.g. 1.1 * 140 from rounding up to 155
    let min = (75 * u64::from(lowest) / 100) as u32;
    let max = (110 * u64::from(highest)).div_ceil(100) as u32;
    Bounds::new(min, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_from_percentages() {
        let hist: IntensityHistogram = vec![(140, 1), (90, 5)].into();
        assert_eq!(default_bounds(&hist, &[80, 120]).unwrap(), Bounds { min: 60, max: 154 });
        let hist: IntensityHistogram = vec![(100, 1)].into();
        assert_eq!(default_bounds(&hist, &[100]).unwrap(), Bounds { min: 75, max: 110 });
    }

    #[test]
    fn bounds_need_breakdowns() {
        let hist: IntensityHistogram = vec![(100, 1)].into();
        assert!(matches!(default_bounds(&hist, &[]), Err(Error::NoBreakdowns(_))));
    }
}
