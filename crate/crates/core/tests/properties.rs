use chrono::{DateTime, Duration, Utc};
use proptest::prelude::*;
use stocap::capacity::{
    breakdown_profile, weibull_cdf, weibull_quantile, Bounds, CfbCurve, IntensityHistogram, WeibullParams,
};
use stocap::estimators::{fit_cfb, plm_estimate, FitOptions};
use stocap::metrics::{curve_errors, ols_fit};
use stocap::synthetic::{generate_pseudo_empirical, split_count, GeneratorConfig};
use stocap::traffic::{
    aggregate_minutes, detect_breakdowns, rolling_aggregate, DetectionConfig, FlowInterval, MinuteLabel,
    VehicleEvent,
};

fn t0() -> DateTime<Utc> {
    "2016-09-14T07:00:00Z".parse().unwrap()
}

fn minutes_from(intensity: &[u32], speed: &[f64]) -> Vec<FlowInterval> {
    intensity
        .iter()
        .zip(speed)
        .enumerate()
        .map(|(i, (&q, &v))| FlowInterval {
            start: t0() + Duration::minutes(i as i64),
            width: 1,
            intensity: q,
            mean_speed: Some(v),
            vehicle_count: q,
            zero_speed_count: 0,
            partial: false,
        })
        .collect()
}

fn params() -> impl Strategy<Value = WeibullParams> {
    (50.0..300.0f64, 1.5..15.0f64).prop_map(|(l, g)| WeibullParams::new(l, g).unwrap())
}

fn histogram() -> impl Strategy<Value = IntensityHistogram> {
    proptest::collection::vec((40u32..160, 1u64..50), 1..40).prop_map(IntensityHistogram::from)
}

/// Speed traces alternating between free flow and slow spells.
fn speed_trace() -> impl Strategy<Value = (Vec<u32>, Vec<f64>)> {
    proptest::collection::vec((10u32..60, prop_oneof![3 => 75.0..120.0f64, 1 => 5.0..60.0f64]), 3..150)
        .prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #[test]
    fn quantile_inverts_cdf(p in params(), prob in 1e-6..0.999999f64) {
        let x = weibull_quantile(p, prob).unwrap();
        prop_assert!((weibull_cdf(p, x).unwrap() - prob).abs() < 1e-9);
    }

    #[test]
    fn cdf_is_monotone(p in params(), a in 0.0..400.0f64, d in 0.0..100.0f64) {
        prop_assert!(weibull_cdf(p, a).unwrap() <= weibull_cdf(p, a + d).unwrap());
    }

    #[test]
    fn profile_is_linear_in_records(hist in histogram(), k in 1u64..20, p in params()) {
        let bounds = Bounds::new(40, 160).unwrap();
        let scaled: IntensityHistogram = hist.iter().map(|(l, c)| (l, c * k)).collect::<Vec<_>>().into();
        let a = breakdown_profile(&hist, &p, bounds);
        let b = breakdown_profile(&scaled, &p, bounds);
        for (x, y) in a.b_bar.iter().zip(&b.b_bar) {
            prop_assert!((x * k as f64 - y).abs() <= 1e-9 * y.max(1.0));
        }
    }

    #[test]
    fn histogram_preserves_total(levels in proptest::collection::vec(0u32..300, 0..200)) {
        let hist: IntensityHistogram = levels.iter().map(|&l| (l, 1)).collect();
        prop_assert_eq!(hist.total(), levels.len() as u64);
    }

    #[test]
    fn rolling_window_count((q, v) in speed_trace(), k in 1usize..6) {
        let minutes = minutes_from(&q, &v);
        let rolled = rolling_aggregate(&minutes, k);
        prop_assert_eq!(rolled.len(), minutes.len().saturating_sub(k - 1));
        for (i, r) in rolled.iter().enumerate() {
            prop_assert_eq!(r.intensity, q[i..i + k].iter().sum::<u32>());
        }
    }

    #[test]
    fn harmonic_mean_at_most_arithmetic(speeds in proptest::collection::vec(1.0..200.0f64, 1..40)) {
        let events: Vec<VehicleEvent> = speeds
            .iter()
            .enumerate()
            .map(|(i, &s)| VehicleEvent {
                timestamp: t0() + Duration::seconds(i as i64),
                speed: s,
                length: 4.5,
                valid: true,
            })
            .collect();
        let minutes = aggregate_minutes(&events, &DetectionConfig::default());
        let arithmetic = speeds.iter().sum::<f64>() / speeds.len() as f64;
        let harmonic = minutes[0].mean_speed.unwrap();
        prop_assert!(harmonic <= arithmetic * (1.0 + 1e-12));
    }

    #[test]
    fn detection_conserves_minutes((q, v) in speed_trace()) {
        let minutes = minutes_from(&q, &v);
        let det = detect_breakdowns(&minutes, &DetectionConfig::default()).unwrap();
        let labelled = det.labels.iter().filter(|l| **l != MinuteLabel::Ineligible).count();
        prop_assert_eq!(det.eligible_minutes(), labelled);
    }

    #[test]
    fn breakdown_flow_is_the_preceding_window((q, v) in speed_trace()) {
        let minutes = minutes_from(&q, &v);
        let det = detect_breakdowns(&minutes, &DetectionConfig::default()).unwrap();
        for b in &det.breakdowns {
            let idx = (b.breakdown_minute - t0()).num_minutes() as usize;
            let end = idx - if b.shifted_back { 2 } else { 1 };
            prop_assert_eq!(b.breakdown_flow, q[end - 2..=end].iter().sum::<u32>());
            prop_assert!(v[idx] < 40.0);
        }
    }

    #[test]
    fn split_conserves_product(b in 1e-6..50.0f64) {
        let (n, p) = split_count(b, 0.5);
        prop_assert!(n >= 1 && p > 0.0 && p <= 1.0);
        prop_assert!((n as f64 * p - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn pseudo_empirical_curves_never_drop(hist in histogram(), p in params(), seed in any::<u64>()) {
        let bounds = Bounds::new(40, 160).unwrap();
        let pe = generate_pseudo_empirical(&hist, p, bounds, &GeneratorConfig::with_seed(seed)).unwrap();
        prop_assert!(pe.curve.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(pe.curve.values.last().copied().unwrap_or(0.0), pe.realized_total as f64);
    }

    #[test]
    fn curve_errors_are_symmetric(a in proptest::collection::vec(0.0..100.0f64, 1..30), shift in -5.0..5.0f64) {
        let levels: Vec<u32> = (1..=a.len() as u32).collect();
        let x = CfbCurve { levels: levels.clone(), values: a.clone() };
        let y = CfbCurve { levels, values: a.iter().map(|v| v + shift).collect() };
        prop_assert_eq!(curve_errors(&x, &y).unwrap(), curve_errors(&y, &x).unwrap());
    }

    #[test]
    fn plm_without_censoring_is_empirical_survival(flows in proptest::collection::vec(50u32..150, 1..60), x in 40.0..160.0f64) {
        let mut counts = std::collections::BTreeMap::new();
        for &f in &flows {
            *counts.entry(f).or_insert(0.0) += 1.0;
        }
        let failures: Vec<(u32, f64)> = counts.into_iter().collect();
        let plm = plm_estimate(&failures, &IntensityHistogram::default()).unwrap();
        let above = flows.iter().filter(|&&f| f as f64 > x).count() as f64 / flows.len() as f64;
        prop_assert!((plm.survival_at(x) - above).abs() < 1e-12);
    }

    #[test]
    fn ols_residuals_are_orthogonal(rows in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 8..50)) {
        let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let x2: Vec<f64> = rows.iter().map(|r| r.1 * r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let fit = match ols_fit(&[("x1".into(), x1.clone()), ("x2".into(), x2.clone())], &y, true) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        let c = &fit.coefficients;
        let resid: Vec<f64> = (0..y.len()).map(|i| y[i] - c[0] - c[1] * x1[i] - c[2] * x2[i]).collect();
        let scale: f64 = y.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        for col in [vec![1.0; y.len()], x1, x2] {
            let dot: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            let norm: f64 = col.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(dot.abs() <= 1e-8 * norm * scale, "dot {dot}");
        }
    }

    #[test]
    fn ols_recovers_exact_coefficients(b in proptest::collection::vec(-5.0..5.0f64, 3), xs in proptest::collection::vec(0.5..50.0f64, 10..40)) {
        let x2: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let y: Vec<f64> = xs.iter().zip(&x2).map(|(x, l)| b[0] + b[1] * x + b[2] * l).collect();
        if let Ok(fit) = ols_fit(&[("x".into(), xs.clone()), ("ln_x".into(), x2)], &y, true) {
            for (got, want) in fit.coefficients.iter().zip(&b) {
                prop_assert!((got - want).abs() <= 1e-7 * (1.0 + want.abs()), "{got} vs {want}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fit_ignores_overall_record_scale(k in 2u64..6, scale in 130.0..170.0f64, shape in 5.0..8.0f64) {
        let hist: IntensityHistogram = (60u32..=180).map(|l| (l, 5 + (l % 7) as u64)).collect::<Vec<_>>().into();
        let bounds = Bounds::new(60, 180).unwrap();
        let truth = WeibullParams::new(scale, shape).unwrap();
        let target = stocap::capacity::theoretical_cfb(&hist, &truth, bounds);
        let scaled: IntensityHistogram = hist.iter().map(|(l, c)| (l, c * k)).collect::<Vec<_>>().into();
        let scaled_target = CfbCurve {
            levels: target.levels.clone(),
            values: target.values.iter().map(|v| v * k as f64).collect(),
        };
        let opts = FitOptions::default();
        let a = fit_cfb(&hist, &target, bounds, &opts).unwrap().params;
        let b = fit_cfb(&scaled, &scaled_target, bounds, &opts).unwrap().params;
        prop_assert!((a.scale / b.scale - 1.0).abs() < 1e-5 && (a.shape / b.shape - 1.0).abs() < 1e-5);
    }
}
