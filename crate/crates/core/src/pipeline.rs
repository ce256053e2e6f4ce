//! End-to-end run: events CSV to a report bundle, plus the file readers the
//! individual command line steps share.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::capacity::Bounds;
use crate::error::{Error, Result};
use crate::estimators::{default_bounds, FitOptions};
use crate::manifest::{write_json, write_text, write_with, Clock, RunManifest, MANIFEST_FILE};
use crate::report::{
    estimate_from_detection, exposure_histogram, overlay_chart, quantile_table, relative_difference_curve,
    write_difference_csv, write_quantile_csv, Estimate, Method, QUANTILE_LEVELS,
};
use crate::traffic::{
    aggregate_minutes, detect_breakdowns, parse_events, read_minutes_csv, write_minutes_csv, Detection,
    DetectionConfig, FlowInterval, ParsedEvents,
};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn read_events(path: &Path) -> Result<ParsedEvents> {
    parse_events(open(path)?)
}

pub fn read_minutes(path: &Path) -> Result<Vec<FlowInterval>> {
    read_minutes_csv(open(path)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Events CSV of the main dataset.
    pub input: PathBuf,
    /// Optional second events CSV, compared against the first.
    #[serde(default)]
    pub compare_input: Option<PathBuf>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Fixed estimation bounds; derived from the data when absent.
    #[serde(default)]
    pub bounds: Option<Bounds>,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_levels")]
    pub quantile_levels: Vec<f64>,
}

fn default_method() -> Method {
    Method::Cfb
}

fn default_levels() -> Vec<f64> {
    QUANTILE_LEVELS.to_vec()
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            compare_input: None,
            out_dir: out_dir.into(),
            detection: DetectionConfig::default(),
            method: Method::Cfb,
            bounds: None,
            fit: FitOptions::default(),
            quantile_levels: default_levels(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetRun {
    pub minutes: Vec<FlowInterval>,
    pub detection: Detection,
    pub estimate: Estimate,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub primary: DatasetRun,
    pub compared: Option<DatasetRun>,
    pub manifest: RunManifest,
    pub outputs: Vec<PathBuf>,
}

fn run_dataset(input: &Path, cfg: &PipelineConfig) -> Result<DatasetRun> {
    let parsed = read_events(input).map_err(|e| e.in_stage("ingest"))?;
    info!(
        "{}: {} events kept, {} invalid, {} duplicates, {} out of range",
        input.display(),
        parsed.events.len(),
        parsed.dropped_invalid,
        parsed.dropped_duplicate,
        parsed.dropped_out_of_bounds
    );
    let minutes = aggregate_minutes(&parsed.events, &cfg.detection);
    let detection = detect_breakdowns(&minutes, &cfg.detection).map_err(|e| e.in_stage("detect"))?;
    info!(
        "{} breakdowns, {} censored records",
        detection.breakdowns.len(),
        detection.histogram.total()
    );
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => default_bounds(&exposure_histogram(&detection), &detection.breakdown_flows())
            .map_err(|e| e.in_stage("bounds"))?,
    };
    let estimate = estimate_from_detection(&detection, cfg.method, Some(bounds), &cfg.fit)
        .map_err(|e| e.in_stage("estimate"))?;
    Ok(DatasetRun {
        minutes,
        detection,
        estimate,
    })
}

/// Overlay chart, quantile table and, with a second estimate, the relative
/// difference curve. Returns the files written.
pub fn write_report_bundle(
    dir: &Path,
    a: (&str, &Estimate),
    b: Option<(&str, &Estimate)>,
    levels: &[f64],
    stamp: &str,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut series = vec![a];
    series.extend(b);
    let chart = overlay_chart(&series, Some(stamp.to_string()));
    let svg = dir.join("overlay.svg");
    write_text(&svg, &chart.render())?;
    written.push(svg);

    let table = quantile_table(a.1, b.map(|b| b.1), levels)?;
    let q = dir.join("quantiles.csv");
    write_with(&q, |w| write_quantile_csv(&table, b.is_some(), w))?;
    written.push(q);

    if let Some((_, eb)) = b {
        let rows = relative_difference_curve(a.1, eb);
        let d = dir.join("relative_difference.csv");
        write_with(&d, |w| write_difference_csv(&rows, w))?;
        written.push(d);
    }
    Ok(written)
}

fn write_dataset(dir: &Path, suffix: &str, run: &DatasetRun) -> Result<Vec<PathBuf>> {
    let minutes = dir.join(format!("minutes{suffix}.csv"));
    write_with(&minutes, |w| write_minutes_csv(&run.minutes, w))?;
    let detection = dir.join(format!("detection{suffix}.json"));
    write_json(&detection, &run.detection)?;
    let estimate = dir.join(format!("estimate{suffix}.json"));
    write_json(&estimate, &run.estimate)?;
    Ok(vec![minutes, detection, estimate])
}

/// Runs every stage and writes the bundle plus `manifest.json` into
/// `config.out_dir`. Errors carry the name of the failing stage.
pub fn run_pipeline(config: &PipelineConfig, clock: &Clock) -> Result<PipelineRun> {
    config.detection.validate()?;
    let mut manifest = RunManifest::start("pipeline", config, clock)?;
    manifest.record_input(&config.input).map_err(|e| e.in_stage("ingest"))?;
    if let Some(b) = &config.compare_input {
        manifest.record_input(b).map_err(|e| e.in_stage("ingest"))?;
    }

    let primary = run_dataset(&config.input, config)?;
    let compared = config
        .compare_input
        .as_deref()
        .map(|p| run_dataset(p, config))
        .transpose()?;

    let dir = &config.out_dir;
    let report = || -> Result<Vec<PathBuf>> {
        let mut out = write_dataset(dir, "", &primary)?;
        if let Some(c) = &compared {
            out.extend(write_dataset(dir, "_b", c)?);
        }
        out.extend(write_report_bundle(
            dir,
            ("A", &primary.estimate),
            compared.as_ref().map(|c| ("B", &c.estimate)),
            &config.quantile_levels,
            &manifest.started_at,
        )?);
        Ok(out)
    };
    let outputs = report().map_err(|e| e.in_stage("report"))?;
    manifest.finish(&outputs, clock)?;
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(PipelineRun {
        primary,
        compared,
        manifest,
        outputs,
    })
}

/// Runs a recorded pipeline again, optionally into another directory. The
/// inputs must be unchanged and the clock is pinned to the recorded start.
pub fn replay_pipeline(manifest: &RunManifest, out_dir: Option<&Path>) -> Result<PipelineRun> {
    if manifest.subcommand != "pipeline" {
        return Err(Error::Manifest(format!(
            "expected a pipeline manifest, found `{}`",
            manifest.subcommand
        )));
    }
    manifest.verify_inputs()?;
    let mut config: PipelineConfig = manifest.config_as()?;
    if let Some(d) = out_dir {
        config.out_dir = d.to_path_buf();
    }
    run_pipeline(&config, &manifest.replay_clock()?)
}
