//! Capacity distribution and the breakdown-count curves derived from it.
//!
//! The capacity CDF `F(I)` is read as the probability that a 3-minute
//! interval carrying intensity `I` ends in a breakdown. Combined with a
//! demand histogram `r(I)` it gives the expected number of breakdowns per
//! level, `b(I) = r(I) * F(I)`, and their running sum over the intensity
//! grid, the cumulative frequency of breakdowns (CF_B).

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of free-flow 3-minute records per integer PCE level.
///
/// Bins are one PCE wide. Serializes as a list of `[intensity, count]` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<(u32, u64)>", into = "Vec<(u32, u64)>")]
pub struct IntensityHistogram {
    counts: BTreeMap<u32, u64>,
}

impl From<Vec<(u32, u64)>> for IntensityHistogram {
    fn from(pairs: Vec<(u32, u64)>) -> Self {
        let mut hist = IntensityHistogram::default();
        for (level, count) in pairs {
            hist.add(level, count);
        }
        hist
    }
}

impl From<IntensityHistogram> for Vec<(u32, u64)> {
    fn from(hist: IntensityHistogram) -> Self {
        hist.counts.into_iter().collect()
    }
}

impl FromIterator<(u32, u64)> for IntensityHistogram {
    fn from_iter<T: IntoIterator<Item = (u32, u64)>>(iter: T) -> Self {
        let mut hist = IntensityHistogram::default();
        for (level, count) in iter {
            hist.add(level, count);
        }
        hist
    }
}

impl IntensityHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bin_width(&self) -> u32 {
        1
    }

    pub fn add(&mut self, level: u32, count: u64) {
        if count > 0 {
            *self.counts.entry(level).or_insert(0) += count;
        }
    }

    pub fn count(&self, level: u32) -> u64 {
        self.counts.get(&level).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn min_level(&self) -> Option<u32> {
        self.counts.keys().next().copied()
    }

    pub fn max_level(&self) -> Option<u32> {
        self.counts.keys().next_back().copied()
    }

    /// Non-empty bins in ascending level order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&l, &c)| (l, c))
    }

    /// Counts laid out on the integer grid `[bounds.min, bounds.max]`.
    /// Records outside the bounds do not appear.
    pub fn dense(&self, bounds: Bounds) -> Vec<f64> {
        let mut out = vec![0.0; bounds.len()];
        for (&level, &count) in self.counts.range(bounds.min..=bounds.max) {
            out[(level - bounds.min) as usize] = count as f64;
        }
        out
    }
}

/// Builds a histogram from raw 3-minute intensities.
pub fn build_histogram(records: &[u32]) -> IntensityHistogram {
    records.iter().map(|&r| (r, 1)).collect()
}

/// Inclusive integer intensity range `[min, max]` on which curves live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: u32,
    pub max: u32,
}

impl Bounds {
    pub fn new(min: u32, max: u32) -> Result<Self> {
        if min >= max {
            return Err(Error::InvalidBounds { min, max });
        }
        Ok(Bounds { min, max })
    }

    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn levels(&self) -> Vec<u32> {
        (self.min..=self.max).collect()
    }

    pub fn clamp(&self, level: u32) -> u32 {
        level.clamp(self.min, self.max)
    }
}

/// A capacity CDF: probability of breakdown at a given intensity.
pub trait CapacityCdf {
    fn cdf(&self, intensity: f64) -> f64;
}

impl<F: Fn(f64) -> f64> CapacityCdf for F {
    fn cdf(&self, intensity: f64) -> f64 {
        self(intensity)
    }
}

/// Two-parameter Weibull capacity distribution, `F(I) = 1 - exp(-(I/scale)^shape)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    /// PCE per 3-minute interval.
    pub scale: f64,
    pub shape: f64,
}

impl WeibullParams {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "scale",
                value: scale,
                reason: "must be positive and finite",
            });
        }
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "shape",
                value: shape,
                reason: "must be positive and finite",
            });
        }
        Ok(WeibullParams { scale, shape })
    }

    /// Unchecked CDF; non-positive intensities map to 0.
    #[inline]
    pub fn cdf_at(&self, intensity: f64) -> f64 {
        if intensity <= 0.0 {
            return 0.0;
        }
        -(-(intensity / self.scale).powf(self.shape)).exp_m1()
    }
}

impl CapacityCdf for WeibullParams {
    fn cdf(&self, intensity: f64) -> f64 {
        self.cdf_at(intensity)
    }
}

pub fn weibull_cdf(params: WeibullParams, intensity: f64) -> Result<f64> {
    if intensity.is_nan() || intensity < 0.0 {
        return Err(Error::InvalidParameter {
            name: "intensity",
            value: intensity,
            reason: "must be non-negative",
        });
    }
    Ok(params.cdf_at(intensity))
}

/// Intensity at which the breakdown probability reaches `p`.
pub fn weibull_quantile(params: WeibullParams, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter {
            name: "probability",
            value: p,
            reason: "must lie strictly between 0 and 1",
        });
    }
    Ok(params.scale * (-(-p).ln_1p()).powf(1.0 / params.shape))
}

/// Expected breakdown count per integer level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownProfile {
    pub levels: Vec<u32>,
    pub b_bar: Vec<f64>,
}

impl BreakdownProfile {
    pub fn total(&self) -> f64 {
        self.b_bar.iter().sum()
    }

    pub fn bounds(&self) -> Option<Bounds> {
        Some(Bounds {
            min: *self.levels.first()?,
            max: *self.levels.last()?,
        })
    }
}

/// `b(I) = r(I) * F(I)` for every integer level of `bounds`.
pub fn breakdown_profile(
    hist: &IntensityHistogram,
    cdf: &impl CapacityCdf,
    bounds: Bounds,
) -> BreakdownProfile {
    if hist.is_empty() {
        warn!("breakdown profile requested for an empty histogram");
    }
    let levels = bounds.levels();
    let b_bar = hist
        .dense(bounds)
        .into_iter()
        .zip(&levels)
        .map(|(r, &level)| if r > 0.0 { r * cdf.cdf(level as f64) } else { 0.0 })
        .collect();
    BreakdownProfile { levels, b_bar }
}

/// Cumulative frequency of breakdowns on an integer grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfbCurve {
    pub levels: Vec<u32>,
    /// Non-decreasing running totals.
    pub values: Vec<f64>,
}

impl CfbCurve {
    pub fn zeros(bounds: Bounds) -> Self {
        CfbCurve {
            levels: bounds.levels(),
            values: vec![0.0; bounds.len()],
        }
    }

    pub fn total(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn bounds(&self) -> Option<Bounds> {
        Some(Bounds {
            min: *self.levels.first()?,
            max: *self.levels.last()?,
        })
    }

    /// Per-level increments, i.e. the breakdown counts the curve was built from.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.values
            .iter()
            .map(|&v| {
                let d = v - prev;
                prev = v;
                d
            })
            .collect()
    }

    pub fn same_grid(&self, other: &CfbCurve) -> bool {
        self.levels == other.levels
    }
}

pub fn cumulative_frequency(profile: &BreakdownProfile) -> CfbCurve {
    let mut acc = 0.0;
    let values = profile
        .b_bar
        .iter()
        .map(|&b| {
            acc += b;
            acc
        })
        .collect();
    CfbCurve {
        levels: profile.levels.clone(),
        values,
    }
}

/// Shorthand for `cumulative_frequency(breakdown_profile(..))`.
pub fn theoretical_cfb(
    hist: &IntensityHistogram,
    cdf: &impl CapacityCdf,
    bounds: Bounds,
) -> CfbCurve {
    cumulative_frequency(&breakdown_profile(hist, cdf, bounds))
}

/// Step curve counting observed breakdowns with flow at or below each level.
///
/// Flows outside `bounds` are counted at the nearest end; the number of such
/// flows is returned alongside the curve.
pub fn empirical_cfb(flows: &[u32], bounds: Bounds) -> (CfbCurve, usize) {
    let mut counts = vec![0.0; bounds.len()];
    let mut clipped = 0;
    for &flow in flows {
        let level = bounds.clamp(flow);
        if level != flow {
            clipped += 1;
        }
        counts[(level - bounds.min) as usize] += 1.0;
    }
    if clipped > 0 {
        warn!("{clipped} breakdown flows fell outside [{}, {}] and were clipped", bounds.min, bounds.max);
    }
    let profile = BreakdownProfile {
        levels: bounds.levels(),
        b_bar: counts,
    };
    (cumulative_frequency(&profile), clipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(scale: f64, shape: f64) -> WeibullParams {
        WeibullParams::new(scale, shape).unwrap()
    }

    #[test]
    fn cdf_edge_values() {
        let p = w(150.0, 6.5);
        assert_eq!(weibull_cdf(p, 0.0).unwrap(), 0.0);
        for shape in [0.5, 1.0, 6.5, 12.0] {
            let f = weibull_cdf(w(150.0, shape), 150.0).unwrap();
            assert!((f - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        }
        assert!(weibull_cdf(p, -1.0).is_err());
    }

    #[test]
    fn cdf_at_low_quantile_of_fitted_work_zone() {
        let f = weibull_cdf(w(149.73, 6.55), 52.1).unwrap();
        assert!((f - 0.001).abs() < 5e-5, "{f}");
    }

    #[test]
    fn quantile_examples() {
        let q = weibull_quantile(w(149.73, 6.55), 0.001).unwrap();
        assert!((q - 52.1).abs() <= 0.1, "{q}");
        let q = weibull_quantile(w(154.35, 7.19), 0.05).unwrap();
        assert!((q - 102.1).abs() <= 0.1, "{q}");
        let q = weibull_quantile(w(123.0, 4.0), 1.0 - (-1.0f64).exp()).unwrap();
        assert!((q - 123.0).abs() < 1e-12);
        assert!(weibull_quantile(w(1.0, 1.0), 0.0).is_err());
        assert!(weibull_quantile(w(1.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn rejects_non_positive_params() {
        assert!(WeibullParams::new(0.0, 1.0).is_err());
        assert!(WeibullParams::new(1.0, -2.0).is_err());
        assert!(WeibullParams::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn histogram_counting() {
        let h = build_histogram(&[120, 120, 80]);
        assert_eq!(h.iter().collect::<Vec<_>>(), vec![(80, 1), (120, 2)]);
        assert_eq!(h.total(), 3);
        let empty = build_histogram(&[]);
        assert!(empty.is_empty());
        assert_eq!(empty.total(), 0);
    }

    #[test]
    fn histogram_json_is_pairs() {
        let h = build_histogram(&[7, 7, 9]);
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, "[[7,2],[9,1]]");
        let back: IntensityHistogram = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn profile_hand_product() {
        let hist: IntensityHistogram = vec![(100, 10)].into();
        let cdf = |i: f64| if i >= 100.0 { 0.1 } else { 0.0 };
        let prof = breakdown_profile(&hist, &cdf, Bounds::new(90, 110).unwrap());
        assert_eq!(prof.levels.len(), 21);
        assert!((prof.b_bar[10] - 1.0).abs() < 1e-15);
        assert_eq!(prof.total(), prof.b_bar[10]);
    }

    #[test]
    fn profile_zero_cdf_and_empty_histogram() {
        let hist: IntensityHistogram = vec![(100, 10), (105, 3)].into();
        let prof = breakdown_profile(&hist, &|_: f64| 0.0, Bounds::new(90, 110).unwrap());
        assert!(prof.b_bar.iter().all(|&b| b == 0.0));
        let prof = breakdown_profile(&IntensityHistogram::new(), &w(150.0, 6.5), Bounds::new(1, 5).unwrap());
        assert!(prof.b_bar.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn cumulative_prefix_sum() {
        let prof = BreakdownProfile {
            levels: vec![100, 110],
            b_bar: vec![1.0, 1.0],
        };
        let c = cumulative_frequency(&prof);
        assert_eq!(c.values, vec![1.0, 2.0]);
        assert_eq!(c.increments(), vec![1.0, 1.0]);
    }

    #[test]
    fn empirical_steps() {
        let b = Bounds::new(110, 140).unwrap();
        let (c, clipped) = empirical_cfb(&[120, 120, 135], b);
        assert_eq!(clipped, 0);
        assert_eq!(c.values[(119 - 110) as usize], 0.0);
        assert_eq!(c.values[(120 - 110) as usize], 2.0);
        assert_eq!(c.values[(134 - 110) as usize], 2.0);
        assert_eq!(c.values[(135 - 110) as usize], 3.0);
        assert_eq!(c.total(), 3.0);

        let (c, _) = empirical_cfb(&[], b);
        assert!(c.values.iter().all(|&v| v == 0.0));

        let (c, clipped) = empirical_cfb(&[100, 150], b);
        assert_eq!(clipped, 2);
        assert_eq!(c.values[0], 1.0);
        assert_eq!(c.total(), 2.0);
    }

    #[test]
    fn curve_json_shape() {
        let c = CfbCurve {
            levels: vec![1, 2],
            values: vec![0.5, 1.0],
        };
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"levels":[1,2],"values":[0.5,1.0]}"#
        );
        let p = w(150.0, 6.5);
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"scale":150.0,"shape":6.5}"#);
    }

    #[test]
    fn bounds_validation() {
        assert!(Bounds::new(10, 10).is_err());
        assert_eq!(Bounds::new(10, 12).unwrap().len(), 3);
    }
}
