//! Resolved configurations of every subcommand and the code that runs them.
//!
//! Each runner writes its outputs and a manifest holding the resolved config,
//! so `rerun` only has to deserialize that config and call the runner again.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use stocap::capacity::{weibull_quantile, Bounds, IntensityHistogram, WeibullParams};
use stocap::estimators::FitOptions;
use stocap::experiments::{
    awre_regression, censoring_sweep, compare_methods, expected_bounds, run_case, sample_size_sweep,
    CensoringConfig, ExperimentCase, RegressionConfig, SurrogateDemand, SweepConfig, SweepResult,
};
use stocap::manifest::{sibling_manifest_path, write_json, write_text, write_with, Clock, RunManifest, MANIFEST_FILE};
use stocap::pipeline::{read_events, read_json, read_minutes, run_pipeline, write_report_bundle, PipelineConfig};
use stocap::report::{
    awre_scatter_chart, censoring_chart, estimate_from_detection, write_case_csv, write_cases_csv,
    write_censoring_csv, write_comparison_csv, write_dataset_csv, Estimate, Method, QUANTILE_LEVELS,
};
use stocap::synthetic::{generate_pseudo_empirical, GeneratorConfig, PRNG_ID};
use stocap::traffic::{aggregate_minutes, detect_breakdowns, write_minutes_csv, Detection, DetectionConfig};
use stocap::{Error, Result};

fn w150() -> WeibullParams {
    WeibullParams {
        scale: 150.0,
        shape: 6.5,
    }
}

fn single_output(manifest: &mut RunManifest, out: &Path, clock: &Clock) -> Result<()> {
    manifest.finish(&[out], clock)?;
    manifest.write(&sibling_manifest_path(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub detection: DetectionConfig,
}

pub fn ingest(cfg: &IngestConfig, clock: &Clock) -> Result<()> {
    let mut manifest = RunManifest::start("ingest", cfg, clock)?;
    manifest.record_input(&cfg.input)?;
    let parsed = read_events(&cfg.input)?;
    info!(
        "{} events kept; dropped {} invalid, {} duplicate, {} implausible; {} malformed rows",
        parsed.events.len(),
        parsed.dropped_invalid,
        parsed.dropped_duplicate,
        parsed.dropped_out_of_bounds,
        parsed.diagnostics.len()
    );
    let minutes = aggregate_minutes(&parsed.events, &cfg.detection);
    write_with(&cfg.out, |w| write_minutes_csv(&minutes, w))?;
    single_output(&mut manifest, &cfg.out, clock)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub minutes: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub detection: DetectionConfig,
}

pub fn detect(cfg: &DetectConfig, clock: &Clock) -> Result<()> {
    let mut manifest = RunManifest::start("detect", cfg, clock)?;
    manifest.record_input(&cfg.minutes)?;
    let minutes = read_minutes(&cfg.minutes)?;
    let detection = detect_breakdowns(&minutes, &cfg.detection)?;
    info!(
        "{} breakdowns, {} censored records, {} discarded minutes",
        detection.breakdowns.len(),
        detection.histogram.total(),
        detection.discarded_minutes
    );
    write_json(&cfg.out, &detection)?;
    single_output(&mut manifest, &cfg.out, clock)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub detection: PathBuf,
    pub out: PathBuf,
    pub method: Method,
    #[serde(default)]
    pub bounds: Option<Bounds>,
    #[serde(default)]
    pub fit: FitOptions,
}

pub fn estimate(cfg: &EstimateConfig, clock: &Clock) -> Result<()> {
    let mut manifest = RunManifest::start("estimate", cfg, clock)?;
    manifest.record_input(&cfg.detection)?;
    let detection: Detection = read_json(&cfg.detection)?;
    let est = estimate_from_detection(&detection, cfg.method, cfg.bounds, &cfg.fit)?;
    if let Some(p) = est.params {
        info!("scale {:.2}, shape {:.3} on [{}, {}]", p.scale, p.shape, est.bounds.min, est.bounds.max);
    }
    write_json(&cfg.out, &est)?;
    single_output(&mut manifest, &cfg.out, clock)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub params: WeibullParams,
    pub records: u64,
    pub seed: u64,
    pub out: PathBuf,
    /// Demand shape; its record total is replaced by `records`.
    #[serde(default)]
    pub demand: SurrogateDemand,
    #[serde(default)]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Serialize)]
struct SynthOutput<'a> {
    config: SynthSettings<'a>,
    seed: u64,
    prng: &'static str,
    peak_intensity: f64,
    bounds: Bounds,
    histogram: &'a IntensityHistogram,
    expected_total: f64,
    realized_total: u64,
    counts: &'a [u64],
    expected_counts: &'a [f64],
    curve: &'a stocap::capacity::CfbCurve,
}

/// The generator settings without the output path, so relocated reruns match.
#[derive(Debug, Serialize)]
struct SynthSettings<'a> {
    params: WeibullParams,
    records: u64,
    demand: &'a SurrogateDemand,
    bounds: Option<Bounds>,
}

pub fn synth(cfg: &SynthConfig, clock: &Clock) -> Result<()> {
    let mut manifest = RunManifest::start("synth", cfg, clock)?.with_seeds(vec![cfg.seed], PRNG_ID);
    let demand = SurrogateDemand {
        total_records: cfg.records,
        ..cfg.demand.clone()
    };
    let (peak, hist) = demand.build()?;
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => expected_bounds(&hist, &cfg.params)?,
    };
    let pe = generate_pseudo_empirical(&hist, cfg.params, bounds, &GeneratorConfig::with_seed(cfg.seed))?;
    let out = SynthOutput {
        config: SynthSettings {
            params: cfg.params,
            records: cfg.records,
            demand: &cfg.demand,
            bounds: cfg.bounds,
        },
        seed: cfg.seed,
        prng: PRNG_ID,
        peak_intensity: peak,
        bounds,
        histogram: &hist,
        expected_total: pe.profile.b_bar.iter().sum(),
        realized_total: pe.realized_total,
        counts: &pe.counts,
        expected_counts: &pe.profile.b_bar,
        curve: &pe.curve,
    };
    info!("{} breakdowns drawn, {:.1} expected", out.realized_total, out.expected_total);
    write_json(&cfg.out, &out)?;
    single_output(&mut manifest, &cfg.out, clock)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Table3Config {
    pub demand: SurrogateDemand,
    pub params: WeibullParams,
    pub replicates: usize,
    pub base_seed: u64,
    pub noise_free: bool,
    pub bounds: Option<Bounds>,
    pub fit: FitOptions,
}

impl Default for Table3Config {
    fn default() -> Self {
        Table3Config {
            demand: SurrogateDemand::default(),
            params: w150(),
            replicates: 15,
            base_seed: 1,
            noise_free: false,
            bounds: None,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepExperiment {
    pub demand: SurrogateDemand,
    pub sweep: SweepConfig,
}

impl Default for SweepExperiment {
    /// The 12-case grid; the regression experiment uses the full one.
    fn default() -> Self {
        SweepExperiment {
            demand: SurrogateDemand::default(),
            sweep: SweepConfig::table5(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CensoringExperiment {
    pub demand: SurrogateDemand,
    pub censoring: CensoringConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareExperiment {
    pub demand: SurrogateDemand,
    pub params: WeibullParams,
    pub bounds: Option<Bounds>,
    pub seeds: Vec<u64>,
    pub fit: FitOptions,
}

impl Default for CompareExperiment {
    fn default() -> Self {
        CompareExperiment {
            demand: SurrogateDemand::default(),
            params: w150(),
            bounds: None,
            seeds: (1..=15).collect(),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionExperiment {
    pub demand: SurrogateDemand,
    pub sweep: SweepConfig,
    pub regression: RegressionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "settings", rename_all = "snake_case")]
pub enum Experiment {
    Table3(Table3Config),
    Table5(SweepExperiment),
    Censoring(CensoringExperiment),
    Compare(CompareExperiment),
    Regression(RegressionExperiment),
}

impl Experiment {
    /// Defaults for `kind`, overlaid with the JSON object `settings` if given.
    pub fn resolve(kind: &str, settings: Option<serde_json::Value>) -> Result<Self> {
        let settings = match settings {
            Some(v) => v,
            None => match kind {
                "table3" => serde_json::to_value(Table3Config::default())?,
                "table5" => serde_json::to_value(SweepExperiment::default())?,
                "censoring" => serde_json::to_value(CensoringExperiment::default())?,
                "compare" => serde_json::to_value(CompareExperiment::default())?,
                "regression" => serde_json::to_value(RegressionExperiment::default())?,
                other => return Err(Error::Manifest(format!("unknown experiment `{other}`"))),
            },
        };
        Ok(serde_json::from_value(serde_json::json!({ "kind": kind, "settings": settings }))?)
    }

    /// Overrides the base seed(s) of the experiment.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Experiment::Table3(c) => c.base_seed = seed,
            Experiment::Table5(c) => c.sweep.base_seed = seed,
            Experiment::Regression(c) => c.sweep.base_seed = seed,
            Experiment::Compare(c) => {
                let n = c.seeds.len() as u64;
                c.seeds = (seed..seed + n).collect();
            }
            Experiment::Censoring(_) => {}
        }
    }

    fn seeds(&self) -> Vec<u64> {
        match self {
            Experiment::Table3(c) => (c.base_seed..c.base_seed + c.replicates as u64).collect(),
            Experiment::Table5(c) => vec![c.sweep.base_seed],
            Experiment::Regression(c) => vec![c.sweep.base_seed],
            Experiment::Compare(c) => c.seeds.clone(),
            Experiment::Censoring(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub out_dir: PathBuf,
}

fn write_sweep(dir: &Path, result: &SweepResult, out: &mut Vec<PathBuf>) -> Result<()> {
    let cases = dir.join("cases.csv");
    write_with(&cases, |w| write_cases_csv(&result.summaries, w))?;
    let dataset = dir.join("awre_dataset.csv");
    write_with(&dataset, |w| write_dataset_csv(&result.dataset, w))?;
    let full = dir.join("sweep.json");
    write_json(&full, result)?;
    out.extend([cases, dataset, full]);
    Ok(())
}

pub fn experiment(cfg: &ExperimentConfig, clock: &Clock) -> Result<()> {
    let exp = &cfg.experiment;
    let mut manifest = RunManifest::start("experiment", cfg, clock)?.with_seeds(exp.seeds(), PRNG_ID);
    let stamp = Some(manifest.started_at.clone());
    let dir = &cfg.out_dir;
    let mut out = Vec::new();
    match exp {
        Experiment::Table3(c) => {
            let (_, hist) = c.demand.build()?;
            let bounds = match c.bounds {
                Some(b) => b,
                None => expected_bounds(&hist, &c.params)?,
            };
            let case = ExperimentCase {
                replicates: c.replicates,
                noise_free: c.noise_free,
                fit: c.fit,
                ..ExperimentCase::new("table3", 1.0, c.params, c.base_seed)
            };
            let summary = run_case(&case, &hist, bounds)?;
            let csv = dir.join("table3.csv");
            write_with(&csv, |w| write_case_csv(&summary, w))?;
            let json = dir.join("table3.json");
            write_json(&json, &summary)?;
            out.extend([csv, json]);
        }
        Experiment::Table5(c) => {
            let (_, hist) = c.demand.build()?;
            let result = sample_size_sweep(&hist, &c.sweep)?;
            write_sweep(dir, &result, &mut out)?;
            let svg = dir.join("awre_scatter.svg");
            write_text(&svg, &awre_scatter_chart(&result.dataset, None, stamp).render())?;
            out.push(svg);
        }
        Experiment::Regression(c) => {
            let (_, hist) = c.demand.build()?;
            let result = sample_size_sweep(&hist, &c.sweep)?;
            let reports = awre_regression(&result.dataset, &c.regression)?;
            write_sweep(dir, &result, &mut out)?;
            let json = dir.join("regression.json");
            write_json(&json, &reports)?;
            let svg = dir.join("awre_scatter.svg");
            write_text(&svg, &awre_scatter_chart(&result.dataset, reports.first(), stamp).render())?;
            out.extend([json, svg]);
        }
        Experiment::Censoring(c) => {
            let (_, hist) = c.demand.build()?;
            let result = censoring_sweep(&hist, &c.censoring)?;
            let csv = dir.join("censoring.csv");
            write_with(&csv, |w| write_censoring_csv(&result, w))?;
            let json = dir.join("censoring.json");
            write_json(&json, &result)?;
            let svg = dir.join("censoring.svg");
            write_text(&svg, &censoring_chart(&result, stamp).render())?;
            out.extend([csv, json, svg]);
        }
        Experiment::Compare(c) => {
            let (_, hist) = c.demand.build()?;
            let bounds = match c.bounds {
                Some(b) => b,
                None => expected_bounds(&hist, &c.params)?,
            };
            let mut all = Vec::with_capacity(c.seeds.len());
            for &seed in &c.seeds {
                let cmp = compare_methods(&hist, c.params, bounds, seed, &c.fit)?;
                let csv = dir.join(format!("compare_seed_{seed}.csv"));
                write_with(&csv, |w| write_comparison_csv(&cmp, w))?;
                out.push(csv);
                all.push(cmp);
            }
            let json = dir.join("compare.json");
            write_json(&json, &all)?;
            out.push(json);
        }
    }
    info!("{} files written to {}", out.len(), dir.display());
    manifest.finish(&out, clock)?;
    manifest.write(&dir.join(MANIFEST_FILE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Estimate JSON path, or `scale,shape` of a Weibull distribution.
    pub a: String,
    #[serde(default)]
    pub b: Option<String>,
    pub out_dir: PathBuf,
    /// Plot range for estimates given only by their parameters.
    #[serde(default)]
    pub bounds: Option<Bounds>,
    #[serde(default = "default_levels")]
    pub quantile_levels: Vec<f64>,
}

fn default_levels() -> Vec<f64> {
    QUANTILE_LEVELS.to_vec()
}

fn parse_params(s: &str) -> Option<WeibullParams> {
    let (l, g) = s.split_once(',')?;
    WeibullParams::new(l.trim().parse().ok()?, g.trim().parse().ok()?).ok()
}

/// Plot range covering the 0.1 % to 99 % quantiles of `p`.
fn params_bounds(p: WeibullParams) -> Result<Bounds> {
    let lo = weibull_quantile(p, 0.001)?;
    let hi = weibull_quantile(p, 0.99)?;
    Bounds::new((lo * 0.9).floor() as u32, hi.ceil() as u32 + 1)
}

impl ReportConfig {
    fn load(&self, source: &str, manifest: &mut RunManifest) -> Result<Estimate> {
        if let Some(p) = parse_params(source) {
            let bounds = match self.bounds {
                Some(b) => b,
                None => params_bounds(p)?,
            };
            return Ok(Estimate::from_params(p, bounds));
        }
        let path = Path::new(source);
        manifest.record_input(path)?;
        read_json(path)
    }
}

pub fn report(cfg: &ReportConfig, clock: &Clock) -> Result<()> {
    let mut manifest = RunManifest::start("report", cfg, clock)?;
    let a = cfg.load(&cfg.a, &mut manifest)?;
    let b = cfg.b.as_deref().map(|s| cfg.load(s, &mut manifest)).transpose()?;
    let out = write_report_bundle(
        &cfg.out_dir,
        ("A", &a),
        b.as_ref().map(|b| ("B", b)),
        &cfg.quantile_levels,
        &manifest.started_at,
    )?;
    manifest.finish(&out, clock)?;
    manifest.write(&cfg.out_dir.join(MANIFEST_FILE))
}

pub fn pipeline(cfg: &PipelineConfig, clock: &Clock) -> Result<()> {
    let run = run_pipeline(cfg, clock)?;
    let est = &run.primary.estimate;
    match est.params {
        Some(p) => info!(
            "{} breakdowns; scale {:.2}, shape {:.3}",
            est.breakdowns, p.scale, p.shape
        ),
        None => info!("{} breakdowns; product-limit estimate", est.breakdowns),
    }
    Ok(())
}

/// Moves a single-file output into `dir`, keeping its file name.
fn relocate(path: &mut PathBuf, dir: &Path) {
    let name = path.file_name().map(PathBuf::from).unwrap_or_default();
    *path = dir.join(name);
}

/// Runs the command recorded in `manifest` again with its clock pinned to
/// the recorded start. Outputs go to `out_dir` when given.
pub fn rerun(manifest: &RunManifest, out_dir: Option<&Path>) -> Result<()> {
    manifest.verify_inputs()?;
    let clock = manifest.replay_clock()?;
    match manifest.subcommand.as_str() {
        "ingest" => {
            let mut c: IngestConfig = manifest.config_as()?;
            if let Some(d) = out_dir {
                relocate(&mut c.out, d);
            }
            ingest(&c, &clock)
        }
        "detect" => {
            let mut c: DetectConfig = manifest.config_as()?;
            if let Some(d) = out_dir {
                relocate(&mut c.out, d);
            }
            detect(&c, &clock)
        }
        "estimate" => {
            let mut c: EstimateConfig = manifest.config_as()?;
            if let Some(d) = out_dir {
                relocate(&mut c.out, d);
            }
            estimate(&c, &clock)
        }
        "synth" => {
            let mut c: SynthConfig = manifest.config_as()?;
            if let Some(d) = out_dir {
                relocate(&mut c.out, d);
            }
            synth(&c, &clock)
        }
        "experiment" => {
            let mut c: ExperimentConfig = manifest.config_as()?;
            if let Some(d) = out_dir {
                c.out_dir = d.into();
            }
            experiment(&c, &clock)
        }
        "report" => {
            let mut c: ReportConfig = manifest.config_as()?;
            if let Some(d) = out_dir {
                c.out_dir = d.into();
            }
            report(&c, &clock)
        }
        "pipeline" => stocap::pipeline::replay_pipeline(manifest, out_dir).map(|_| ()),
        other => Err(Error::Manifest(format!("unknown subcommand `{other}`"))),
    }
}
