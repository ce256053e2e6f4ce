//! Estimate bundles, quantile comparison tables, CSV writers and charts.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::capacity::{
    empirical_cfb, theoretical_cfb, weibull_quantile, Bounds, CfbCurve, IntensityHistogram, WeibullParams,
};
use crate::error::{Error, Result};
use crate::estimators::{default_bounds, fit_cfb, plm_estimate, FitOptions, PlmCurve};
use crate::experiments::{AwreRow, CaseSummary, CensoringResult, MethodComparison, RegressionReport, ReplicateRecord};
use crate::metrics::ErrorReport;
use crate::svg::{Chart, Series, SeriesKind};
use crate::traffic::Detection;

/// Breakdown probabilities at which capacity quantiles are compared.
pub const QUANTILE_LEVELS: [f64; 7] = [0.001, 0.005, 0.01, 0.02, 0.05, 0.10, 0.15];

pub const PLM_NOTICE: &str = "Product-limit estimate: treats every record as exposed at all lower intensities, \
which traffic flow is not; expect strongly biased breakdown probabilities.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cfb,
    Plm,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cfb" => Ok(Method::Cfb),
            "plm" => Ok(Method::Plm),
            other => Err(format!("unknown method `{other}` (expected cfb or plm)")),
        }
    }
}

/// Result of estimating a capacity distribution from detected breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub method: Method,
    pub params: Option<WeibullParams>,
    pub sse: Option<f64>,
    pub bounds: Bounds,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub breakdowns: usize,
    /// Censored plus breakdown records.
    pub records: u64,
    pub predicted_cfb: CfbCurve,
    pub empirical_cfb: Option<CfbCurve>,
    /// Estimated CDF on every level of `bounds`.
    pub cdf: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plm: Option<PlmCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

impl Estimate {
    /// A bare Weibull estimate without data, e.g. parameters taken from a
    /// publication.
    pub fn from_params(params: WeibullParams, bounds: Bounds) -> Self {
        Estimate {
            method: Method::Cfb,
            params: Some(params),
            sse: None,
            bounds,
            converged: None,
            iterations: None,
            breakdowns: 0,
            records: 0,
            predicted_cfb: CfbCurve::zeros(bounds),
            empirical_cfb: None,
            cdf: bounds.levels().iter().map(|&l| params.cdf_at(l as f64)).collect(),
            plm: None,
            notice: None,
        }
    }

    pub fn cdf_at(&self, intensity: f64) -> f64 {
        match (&self.params, &self.plm) {
            (Some(p), _) => p.cdf_at(intensity),
            (None, Some(plm)) => plm.cdf_at(intensity),
            (None, None) => f64::NAN,
        }
    }

    /// Intensity at which the breakdown probability reaches `p`. For a
    /// product-limit step curve this is the lowest level whose step reaches
    /// `p`; `None` if it never does.
    pub fn quantile(&self, p: f64) -> Result<Option<f64>> {
        if let Some(params) = self.params {
            return weibull_quantile(params, p).map(Some);
        }
        let Some(plm) = &self.plm else {
            return Ok(None);
        };
        Ok(plm.levels.iter().zip(&plm.cdf).find(|(_, &c)| c >= p).map(|(&l, _)| l as f64))
    }
}

/// All records the breakdown probability applies to: censored records plus
/// the breakdown intervals themselves.
pub fn exposure_histogram(detection: &Detection) -> IntensityHistogram {
    let mut hist = detection.histogram.clone();
    for f in detection.breakdown_flows() {
        hist.add(f, 1);
    }
    hist
}

/// Runs the chosen estimator on a detection result.
pub fn estimate_from_detection(
    detection: &Detection,
    method: Method,
    bounds: Option<Bounds>,
    opts: &FitOptions,
) -> Result<Estimate> {
    let flows = detection.breakdown_flows();
    let exposure = exposure_histogram(detection);
    let bounds = match bounds {
        Some(b) => b,
        None => default_bounds(&exposure, &flows)?,
    };
    let (empirical, _) = empirical_cfb(&flows, bounds);
    let base = Estimate {
        method,
        params: None,
        sse: None,
        bounds,
        converged: None,
        iterations: None,
        breakdowns: flows.len(),
        records: exposure.total(),
        predicted_cfb: CfbCurve::zeros(bounds),
        empirical_cfb: Some(empirical.clone()),
        cdf: Vec::new(),
        plm: None,
        notice: None,
    };
    match method {
        Method::Cfb => {
            let fit = fit_cfb(&exposure, &empirical, bounds, opts)?;
            Ok(Estimate {
                params: Some(fit.params),
                sse: Some(fit.sse),
                converged: Some(fit.converged),
                iterations: Some(fit.iterations),
                cdf: bounds.levels().iter().map(|&l| fit.params.cdf_at(l as f64)).collect(),
                predicted_cfb: fit.predicted_cfb,
                ..base
            })
        }
        Method::Plm => {
            let mut counts = std::collections::BTreeMap::new();
            for &f in &flows {
                *counts.entry(f).or_insert(0.0) += 1.0;
            }
            let failures: Vec<(u32, f64)> = counts.into_iter().collect();
            let plm = plm_estimate(&failures, &detection.histogram)?;
            Ok(Estimate {
                cdf: plm.cdf_on(bounds),
                predicted_cfb: theoretical_cfb(&exposure, &plm, bounds),
                plm: Some(plm),
                notice: Some(PLM_NOTICE.into()),
                ..base
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub probability: f64,
    pub intensity_a: Option<f64>,
    pub intensity_b: Option<f64>,
    pub abs_diff: Option<f64>,
    /// `(b - a) / a` in percent.
    pub rel_diff_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub rows: Vec<QuantileRow>,
    pub mean_abs_diff: Option<f64>,
    pub mean_rel_diff_pct: Option<f64>,
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = v.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn quantile_table(a: &Estimate, b: Option<&Estimate>, probabilities: &[f64]) -> Result<QuantileTable> {
    let mut rows = Vec::with_capacity(probabilities.len());
    for &p in probabilities {
        let qa = a.quantile(p)?;
        let qb = match b {
            Some(b) => b.quantile(p)?,
            None => None,
        };
        let abs_diff = qa.zip(qb).map(|(x, y)| y - x);
        rows.push(QuantileRow {
            probability: p,
            intensity_a: qa,
            intensity_b: qb,
            abs_diff,
            rel_diff_pct: qa.zip(abs_diff).map(|(x, d)| d / x * 100.0),
        });
    }
    Ok(QuantileTable {
        mean_abs_diff: mean_of(rows.iter().map(|r| r.abs_diff)),
        mean_rel_diff_pct: mean_of(rows.iter().map(|r| r.rel_diff_pct)),
        rows,
    })
}

/// Quantile comparison of two Weibull distributions given by their parameters.
pub fn weibull_quantile_table(
    a: WeibullParams,
    b: Option<WeibullParams>,
    probabilities: &[f64],
) -> Result<QuantileTable> {
    let dummy = Bounds { min: 0, max: 1 };
    let ea = Estimate::from_params(a, dummy);
    let eb = b.map(|b| Estimate::from_params(b, dummy));
    quantile_table(&ea, eb.as_ref(), probabilities)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_quantile_csv(table: &QuantileTable, paired: bool, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if paired {
        w.write_record(["probability_pct", "intensity_a", "intensity_b", "abs_diff", "rel_diff_pct"])?;
    } else {
        w.write_record(["probability_pct", "intensity"])?;
    }
    for r in &table.rows {
        let p = (r.probability * 100.0).to_string();
        if paired {
            w.write_record([p, opt(r.intensity_a), opt(r.intensity_b), opt(r.abs_diff), opt(r.rel_diff_pct)])?;
        } else {
            w.write_record([p, opt(r.intensity_a)])?;
        }
    }
    if paired {
        w.write_record(["mean".into(), String::new(), String::new(), opt(table.mean_abs_diff), opt(table.mean_rel_diff_pct)])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceRow {
    pub intensity: u32,
    pub cdf_a: f64,
    pub cdf_b: f64,
    /// Drop of breakdown probability from A to B, `(a - b) / a` in percent.
    pub cdf_rel_diff_pct: Option<f64>,
    pub cfb_a: Option<f64>,
    pub cfb_b: Option<f64>,
    pub cfb_rel_diff_pct: Option<f64>,
}

fn curve_value(curve: &CfbCurve, level: u32) -> Option<f64> {
    let first = *curve.levels.first()?;
    curve.values.get(level.checked_sub(first)? as usize).copied()
}

/// Relative differences of the CDF and predicted CF_B of `b` against `a` on
/// the levels of `a`'s bounds.
pub fn relative_difference_curve(a: &Estimate, b: &Estimate) -> Vec<DifferenceRow> {
    let rel = |x: f64, y: f64| (x != 0.0).then(|| (x - y) / x * 100.0);
    a.bounds
        .levels()
        .into_iter()
        .map(|l| {
            let (fa, fb) = (a.cdf_at(l as f64), b.cdf_at(l as f64));
            let (ca, cb) = (curve_value(&a.predicted_cfb, l), curve_value(&b.predicted_cfb, l));
            DifferenceRow {
                intensity: l,
                cdf_a: fa,
                cdf_b: fb,
                cdf_rel_diff_pct: rel(fa, fb),
                cfb_a: ca,
                cfb_b: cb,
                cfb_rel_diff_pct: ca.zip(cb).and_then(|(x, y)| rel(x, y)),
            }
        })
        .collect()
}

pub fn write_difference_csv(rows: &[DifferenceRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["intensity", "cdf_a", "cdf_b", "cdf_rel_diff_pct", "cfb_a", "cfb_b", "cfb_rel_diff_pct"])?;
    for r in rows {
        w.write_record([
            r.intensity.to_string(),
            r.cdf_a.to_string(),
            r.cdf_b.to_string(),
            opt(r.cdf_rel_diff_pct),
            opt(r.cfb_a),
            opt(r.cfb_b),
            opt(r.cfb_rel_diff_pct),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn curve_points(curve: &CfbCurve) -> Vec<(f64, f64)> {
    curve.levels.iter().zip(&curve.values).map(|(&l, &v)| (l as f64, v)).collect()
}

/// Empirical and predicted CF_B with the estimated CDF on the right axis.
pub fn overlay_chart(estimates: &[(&str, &Estimate)], generated: Option<String>) -> Chart {
    let mut chart = Chart {
        title: "Cumulative frequency of breakdowns".into(),
        x_label: "Intensity [PCE / 3 min]".into(),
        y_label: "Cumulative breakdowns".into(),
        y2_label: Some("Breakdown probability".into()),
        generated,
        ..Default::default()
    };
    for (name, e) in estimates {
        match &e.empirical_cfb {
            Some(c) => chart
                .series
                .push(Series::new(format!("{name} empirical CF_B"), SeriesKind::Step, curve_points(c))),
            None => chart.notices.push(format!("{name}: no empirical curve available")),
        }
        if e.empirical_cfb.is_some() || e.breakdowns > 0 {
            chart.series.push(Series::new(
                format!("{name} predicted CF_B"),
                SeriesKind::Line,
                curve_points(&e.predicted_cfb),
            ));
        }
        let cdf = e.bounds.levels().into_iter().zip(&e.cdf).map(|(l, &c)| (l as f64, c)).collect();
        chart
            .series
            .push(Series::new(format!("{name} CDF"), SeriesKind::Line, cdf).on_secondary().dashed());
        if let Some(n) = &e.notice {
            chart.notices.push(format!("{name}: {n}"));
        }
    }
    chart
}

/// Errors of both estimators across censoring rates.
pub fn censoring_chart(result: &CensoringResult, generated: Option<String>) -> Chart {
    let pts = |f: &dyn Fn(&crate::experiments::CensoringPoint) -> f64| {
        result.points.iter().map(|p| (p.target * 100.0, f(p) * 100.0)).collect::<Vec<_>>()
    };
    Chart {
        title: "Product-limit error against censoring rate".into(),
        x_label: "Censored records [%]".into(),
        y_label: "Relative error [%]".into(),
        series: vec![
            Series::new("PLM ARE CF_B", SeriesKind::Line, pts(&|p| p.plm.are_cf)),
            Series::new("PLM AWRE CF_B", SeriesKind::Line, pts(&|p| p.plm.awre_cf)),
            Series::new("PLM ARE CDF", SeriesKind::Line, pts(&|p| p.plm.are_cdf)),
            Series::new("PLM AWRE CDF", SeriesKind::Line, pts(&|p| p.plm.awre_cdf)),
            Series::new("CF_B fit AWRE CDF", SeriesKind::Line, pts(&|p| p.fit.awre_cdf)).dashed(),
        ],
        generated,
        ..Default::default()
    }
}

/// AWRE of the CDF per replicate against recorded breakdowns, with the
/// `bd + ln_bd` regression curve when it was fitted.
pub fn awre_scatter_chart(dataset: &[AwreRow], regression: Option<&RegressionReport>, generated: Option<String>) -> Chart {
    let mut chart = Chart {
        title: "AWRE of the estimated CDF against recorded breakdowns".into(),
        x_label: "Recorded breakdowns".into(),
        y_label: "AWRE CDF [%]".into(),
        generated,
        ..Default::default()
    };
    let mut groups: Vec<String> = Vec::new();
    for r in dataset {
        let g = r.case_id.rsplit('_').next().unwrap_or("").to_string();
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    for g in &groups {
        let pts = dataset
            .iter()
            .filter(|r| r.case_id.rsplit('_').next() == Some(g.as_str()))
            .map(|r| (r.bd_records as f64, r.awre_cdf * 100.0))
            .collect();
        chart.series.push(Series::new(format!("setting {g}"), SeriesKind::Points, pts));
    }
    if let Some(fit) = regression.and_then(|r| r.find(&["bd", "ln_bd"])).and_then(|c| c.result.as_ref()) {
        let hi = dataset.iter().map(|r| r.bd_records).max().unwrap_or(1).max(2);
        let c = &fit.coefficients;
        let curve = (1..=100)
            .map(|i| {
                let n = 1.0 + (hi as f64 - 1.0) * i as f64 / 100.0;
                (n, (c[0] + c[1] * n + c[2] * n.ln()) * 100.0)
            })
            .collect();
        chart.series.push(Series::new("intercept + N + ln N", SeriesKind::Line, curve));
    }
    chart
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// One case laid out with variables as rows and replicates as columns,
/// followed by mean, SD and max.
pub fn write_case_csv(summary: &CaseSummary, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["variable".to_string()];
    header.extend(summary.replicates.iter().map(|r| format!("seed_{}", r.seed)));
    header.extend(["mean", "sd", "max"].map(String::from));
    w.write_record(&header)?;
    let rows: Vec<[f64; 9]> = summary.replicates.iter().map(ReplicateRecord::values).collect();
    for (i, name) in ReplicateRecord::VARIABLES.iter().enumerate() {
        let mut rec = vec![name.to_string()];
        rec.extend(rows.iter().map(|r| fmt(r[i])));
        let s = summary.summary[i];
        rec.extend([fmt(s.mean), fmt(s.sd), fmt(s.max)]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Case means side by side, one column per case.
pub fn write_cases_csv(summaries: &[CaseSummary], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["variable".to_string()];
    header.extend(summaries.iter().map(|s| s.case.id.clone()));
    w.write_record(&header)?;
    let mut row = |name: &str, f: &dyn Fn(&CaseSummary) -> f64| -> Result<()> {
        let mut rec = vec![name.to_string()];
        rec.extend(summaries.iter().map(|s| fmt(f(s))));
        w.write_record(&rec)?;
        Ok(())
    };
    row("tf_records", &|s| s.tf_records as f64)?;
    row("true_scale", &|s| s.case.params.scale)?;
    row("true_shape", &|s| s.case.params.shape)?;
    row("theoretical_queues", &|s| s.theoretical_queues)?;
    for (i, name) in ReplicateRecord::VARIABLES.iter().enumerate() {
        row(&format!("mean_{name}"), &|s| s.summary[i].mean)?;
    }
    row("non_converged", &|s| s.non_converged as f64)?;
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_dataset_csv(rows: &[AwreRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["tf_records", "bd_records", "awre_cf", "awre_cdf", "case_id", "seed"])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_censoring_csv(result: &CensoringResult, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["target", "achieved", "scale", "shape", "imin", "imax"].map(String::from).to_vec();
    for m in ["plm", "fit"] {
        header.extend(["are_cf", "awre_cf", "are_cdf", "awre_cdf"].map(|v| format!("{m}_{v}")));
    }
    w.write_record(&header)?;
    for p in &result.points {
        let mut rec = vec![
            fmt(p.target),
            fmt(p.achieved),
            fmt(p.params.scale),
            fmt(p.params.shape),
            p.bounds.min.to_string(),
            p.bounds.max.to_string(),
        ];
        for r in [&p.plm, &p.fit] {
            rec.extend([r.are_cf, r.awre_cf, r.are_cdf, r.awre_cdf].map(fmt));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Error rows in table order: the CF_B fit, the product-limit method and
/// their ratio.
pub fn write_comparison_csv(c: &MethodComparison, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ErrorReport::CSV_HEADER)?;
    w.write_record(c.fit.csv_row("cfb_fit"))?;
    w.write_record(c.plm.csv_row("plm"))?;
    let mut ratio = vec!["plm_over_fit".to_string()];
    ratio.extend(c.ratios.iter().map(|(_, v)| fmt(*v)));
    w.write_record(&ratio)?;
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table7() -> QuantileTable {
        weibull_quantile_table(
            WeibullParams::new(149.73, 6.55).unwrap(),
            Some(WeibullParams::new(154.35, 7.19).unwrap()),
            &QUANTILE_LEVELS,
        )
        .unwrap()
    }

    #[test]
    fn quantile_table_uses_weibull_quantiles() {
        let t = table7();
        let a = WeibullParams::new(149.73, 6.55).unwrap();
        for r in &t.rows {
            assert_eq!(r.intensity_a, Some(weibull_quantile(a, r.probability).unwrap()));
        }
        assert!((t.rows[0].intensity_a.unwrap() - 52.1).abs() < 0.1);
        assert!((t.mean_abs_diff.unwrap() - 7.0).abs() < 0.1);
    }

    #[test]
    fn single_estimate_csv_has_two_columns() {
        let t = weibull_quantile_table(WeibullParams::new(150.0, 6.5).unwrap(), None, &QUANTILE_LEVELS).unwrap();
        let mut buf = Vec::new();
        write_quantile_csv(&t, false, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("probability_pct,intensity\n"));
        assert_eq!(s.lines().count(), 8);
    }

    #[test]
    fn paired_csv_has_mean_row() {
        let mut buf = Vec::new();
        write_quantile_csv(&table7(), true, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 9);
        assert!(s.lines().last().unwrap().starts_with("mean,,,"));
    }

    #[test]
    fn difference_curve_signs() {
        let b = Bounds::new(50, 120).unwrap();
        let a = Estimate::from_params(WeibullParams::new(149.73, 6.55).unwrap(), b);
        let c = Estimate::from_params(WeibullParams::new(154.35, 7.19).unwrap(), b);
        let rows = relative_difference_curve(&a, &c);
        assert_eq!(rows.len(), 71);
        assert!(rows.iter().all(|r| r.cdf_rel_diff_pct.unwrap() > 0.0));
    }

    #[test]
    fn overlay_notes_missing_empirical_curve() {
        let b = Bounds::new(50, 120).unwrap();
        let a = Estimate::from_params(WeibullParams::new(150.0, 6.5).unwrap(), b);
        let chart = overlay_chart(&[("A", &a)], None);
        assert_eq!(chart.notices.len(), 1);
        assert_eq!(chart.series.len(), 1);
    }

    #[test]
    fn method_parses() {
        assert_eq!("plm".parse::<Method>().unwrap(), Method::Plm);
        assert!("mle".parse::<Method>().is_err());
    }
}
