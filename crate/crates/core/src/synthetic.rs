//! Pseudo-empirical breakdown data drawn from a known capacity distribution.
//!
//! Each level's expected count `b` is split into `n` Bernoulli trials of
//! probability `p = b / n <= target_split`, so the realized count ranges over
//! `0..=n` with mean exactly `b`.
//!
//! Randomness comes from ChaCha8 seeded through `seed_from_u64`; uniforms
//! take the top 53 bits of each 64-bit output. [`PRNG_ID`] names that
//! combination and is written into every artifact that depends on it.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::capacity::{
    breakdown_profile, cumulative_frequency, BreakdownProfile, Bounds, CfbCurve,
    IntensityHistogram, WeibullParams,
};
use crate::error::{Error, Result};

pub const PRNG_ID: &str = "chacha8-rand_chacha0.9-seed_from_u64-u53";

/// Seeded uniform source on `[0, 1)`.
pub struct UniformSource(ChaCha8Rng);

impl UniformSource {
    pub fn new(seed: u64) -> Self {
        UniformSource(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub target_split: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            target_split: 0.5,
        }
    }
}

impl GeneratorConfig {
    pub fn with_seed(seed: u64) -> Self {
        GeneratorConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_split > 0.0 && self.target_split <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "target_split",
                value: self.target_split,
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }
}

/// Number of trials and per-trial probability for an expected count.
pub fn split_count(b_bar: f64, target_split: f64) -> (u64, f64) {
    let n = ((b_bar / target_split).ceil() as u64).max(1);
    (n, b_bar / n as f64)
}

/// Realized breakdown count per level. Trials run level by level from one
/// seeded stream; a trial succeeds when its uniform draw is below `p`.
pub fn generate_counts(profile: &BreakdownProfile, config: &GeneratorConfig) -> Result<Vec<u64>> {
    config.validate()?;
    let mut rng = UniformSource::new(config.seed);
    Ok(profile
        .b_bar
        .iter()
        .map(|&b| {
            let (n, p) = split_count(b, config.target_split);
            (0..n).filter(|_| rng.next() < p).count() as u64
        })
        .collect())
}

/// Noise-free counterpart of [`generate_counts`]: the running total of the
/// expected counts is rounded half up and differenced, so the resulting step
/// curve stays within half a breakdown of the expected one at every level.
pub fn rounded_counts(profile: &BreakdownProfile) -> Vec<u64> {
    let mut acc = 0.0;
    let mut prev = 0u64;
    profile
        .b_bar
        .iter()
        .map(|&b| {
            acc += b;
            let r = (acc + 0.5).floor() as u64;
            let c = r - prev;
            prev = r;
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoEmpirical {
    pub profile: BreakdownProfile,
    pub counts: Vec<u64>,
    pub curve: CfbCurve,
    pub realized_total: u64,
}

pub fn generate_pseudo_empirical(
    hist: &IntensityHistogram,
    true_params: WeibullParams,
    bounds: Bounds,
    config: &GeneratorConfig,
) -> Result<PseudoEmpirical> {
    let profile = breakdown_profile(hist, &true_params, bounds);
    let counts = generate_counts(&profile, config)?;
    Ok(pseudo_from_counts(profile, counts))
}

pub(crate) fn pseudo_from_counts(profile: BreakdownProfile, counts: Vec<u64>) -> PseudoEmpirical {
    let realized = BreakdownProfile {
        levels: profile.levels.clone(),
        b_bar: counts.iter().map(|&c| c as f64).collect(),
    };
    PseudoEmpirical {
        curve: cumulative_frequency(&realized),
        realized_total: counts.iter().sum(),
        profile,
        counts,
    }
}

/// Multiplies every count by `factor`, rounding half up.
pub fn scale_demand(hist: &IntensityHistogram, factor: f64) -> Result<IntensityHistogram> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "factor",
            value: factor,
            reason: "must be positive and finite",
        });
    }
    Ok(hist
        .iter()
        .map(|(l, c)| (l, (c as f64 * factor + 0.5).floor() as u64))
        .collect())
}

/// Surrogate demand histogram: `total_records` draws from a triangular
/// distribution on `[0, peak * (1 + spread)]` with its mode at `peak`,
/// floored to integer PCE levels.
pub fn synth_demand_profile(
    total_records: u64,
    peak_intensity: f64,
    spread: f64,
    seed: u64,
) -> Result<IntensityHistogram> {
    if total_records == 0 {
        return Err(Error::InvalidParameter {
            name: "total_records",
            value: 0.0,
            reason: "must be positive",
        });
    }
    if !(peak_intensity > 0.0 && peak_intensity.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "peak_intensity",
            value: peak_intensity,
            reason: "must be positive and finite",
        });
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "spread",
            value: spread,
            reason: "must be non-negative",
        });
    }
    let upper = peak_intensity * (1.0 + spread);
    let mode_mass = peak_intensity / upper;
    let mut rng = UniformSource::new(seed);
    Ok((0..total_records)
        .map(|_| {
            let u = rng.next();
            let x = if u < mode_mass {
                (u * upper * peak_intensity).sqrt()
            } else {
                upper - ((1.0 - u) * upper * (upper - peak_intensity)).sqrt()
            };
            (x.floor() as u32, 1)
        })
        .collect())
}

/// Expected breakdowns over the whole histogram, `sum_I r(I) F(I)`.
pub fn expected_total(hist: &IntensityHistogram, params: &WeibullParams) -> f64 {
    hist.iter().map(|(l, c)| c as f64 * params.cdf_at(l as f64)).sum()
}

/// Bisects the surrogate profile's peak so that its expected breakdown
/// total under `params` matches `target_total`.
pub fn calibrate_peak(
    total_records: u64,
    spread: f64,
    seed: u64,
    params: &WeibullParams,
    target_total: f64,
) -> Result<f64> {
    let total_at = |peak: f64| -> Result<f64> {
        Ok(expected_total(&synth_demand_profile(total_records, peak, spread, seed)?, params))
    };
    let (mut lo, mut hi) = (1.0, 4.0 * params.scale);
    if total_at(lo)? > target_total || total_at(hi)? < target_total {
        return Err(Error::Bisection(format!(
            "target total {target_total} not bracketed by peaks [{lo}, {hi}]"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if total_at(mid)? < target_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        assert_eq!(split_count(0.3, 0.5), (1, 0.3));
        let (n, p) = split_count(1.2, 0.5);
        assert_eq!(n, 3);
        assert!((p - 0.4).abs() < 1e-15);
        assert_eq!(split_count(0.0, 0.5), (1, 0.0));
        assert_eq!(split_count(1.0, 0.5), (2, 0.5));
    }

    #[test]
    fn zero_profile_generates_nothing() {
        let profile = BreakdownProfile {
            levels: (1..=50).collect(),
            b_bar: vec![0.0; 50],
        };
        for seed in 0..20 {
            let c = generate_counts(&profile, &GeneratorConfig::with_seed(seed)).unwrap();
            assert!(c.iter().all(|&x| x == 0));
        }
    }

    #[test]
    fn same_seed_same_counts() {
        let profile = BreakdownProfile {
            levels: (1..=30).collect(),
            b_bar: (1..=30).map(|i| i as f64 / 10.0).collect(),
        };
        let cfg = GeneratorConfig::with_seed(99);
        assert_eq!(generate_counts(&profile, &cfg).unwrap(), generate_counts(&profile, &cfg).unwrap());
        let other = GeneratorConfig::with_seed(100);
        assert_ne!(generate_counts(&profile, &cfg).unwrap(), generate_counts(&profile, &other).unwrap());
    }

    #[test]
    fn uniforms_in_unit_interval() {
        let mut u = UniformSource::new(7);
        for _ in 0..10_000 {
            let x = u.next();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn rejects_bad_split() {
        let profile = BreakdownProfile {
            levels: vec![1],
            b_bar: vec![1.0],
        };
        let cfg = GeneratorConfig {
            seed: 1,
            target_split: 0.0,
        };
        assert!(generate_counts(&profile, &cfg).is_err());
    }

    #[test]
    fn scaling_rounds_half_up() {
        let h: IntensityHistogram = vec![(100, 10)].into();
        assert_eq!(scale_demand(&h, 2.0).unwrap().count(100), 20);
        let h: IntensityHistogram = vec![(100, 3)].into();
        assert_eq!(scale_demand(&h, 0.5).unwrap().count(100), 2);
        assert!(scale_demand(&h, 0.0).is_err());
    }

    #[test]
    fn demand_profile_conserves_total_and_is_deterministic() {
        let a = synth_demand_profile(100, 80.0, 0.25, 3).unwrap();
        assert_eq!(a.total(), 100);
        assert_eq!(a, synth_demand_profile(100, 80.0, 0.25, 3).unwrap());
        assert!(a.max_level().unwrap() <= 100);
        assert!(synth_demand_profile(0, 80.0, 0.25, 3).is_err());
    }

    #[test]
    fn rounded_counts_track_the_running_total() {
        let profile = BreakdownProfile {
            levels: (1..=6).collect(),
            b_bar: vec![0.3, 0.3, 0.3, 1.2, 0.0, 2.6],
        };
        let c = rounded_counts(&profile);
        assert_eq!(c, vec![0, 1, 0, 1, 0, 3]);
        let mut acc = 0.0;
        let mut got = 0;
        for (b, k) in profile.b_bar.iter().zip(&c) {
            acc += b;
            got += k;
            assert!((got as f64 - acc).abs() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn zero_cdf_pseudo_empirical_is_flat() {
        let hist = synth_demand_profile(500, 80.0, 0.25, 1).unwrap();
        let profile = breakdown_profile(&hist, &|_: f64| 0.0, Bounds::new(40, 110).unwrap());
        let counts = generate_counts(&profile, &GeneratorConfig::with_seed(5)).unwrap();
        let pe = pseudo_from_counts(profile, counts);
        assert_eq!(pe.realized_total, 0);
        assert!(pe.curve.values.iter().all(|&v| v == 0.0));
    }
}
