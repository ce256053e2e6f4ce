use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use stocap::capacity::{Bounds, WeibullParams};
use stocap::estimators::FitOptions;
use stocap::experiments::SurrogateDemand;
use stocap::manifest::{Clock, RunManifest, EPOCH};
use stocap::pipeline::{read_json, PipelineConfig};
use stocap::report::{Method, QUANTILE_LEVELS};
use stocap::traffic::DetectionConfig;

mod commands;

use commands::*;

#[derive(Parser)]
#[command(name = "stocap", version, about = "Stochastic capacity estimation from detector data")]
struct Cli {
    /// Seed for synthetic data and experiments.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pin every timestamp, by default to the Unix epoch.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = EPOCH, value_name = "RFC3339")]
    fixed_clock: Option<String>,
    /// Output directory for commands that write several files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// JSON file with the command's configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DetectionFlags {
    #[arg(long)]
    breakdown_speed: Option<f64>,
    #[arg(long)]
    discard_speed: Option<f64>,
    #[arg(long)]
    recovery_speed: Option<f64>,
    /// Vehicles longer than this count as two passenger cars [m].
    #[arg(long)]
    pce_length: Option<f64>,
}

impl DetectionFlags {
    fn apply(&self, d: &mut DetectionConfig) {
        if let Some(v) = self.breakdown_speed {
            d.breakdown_speed = v;
        }
        if let Some(v) = self.discard_speed {
            d.discard_speed = v;
        }
        if let Some(v) = self.recovery_speed {
            d.recovery_speed = v;
        }
        if let Some(v) = self.pce_length {
            d.pce_length_threshold = v;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate detector events into 1-minute intervals.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        detection: DetectionFlags,
    },
    /// Detect breakdowns and collect censored intensities.
    Detect {
        #[arg(long)]
        minutes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        detection: DetectionFlags,
    },
    /// Estimate the capacity distribution from a detection result.
    Estimate {
        #[arg(long)]
        detection: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = ["cfb", "plm"])]
        method: Option<String>,
        #[arg(long, requires = "imax")]
        imin: Option<u32>,
        #[arg(long, requires = "imin")]
        imax: Option<u32>,
        /// Multi-start grid points per parameter axis.
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Draw a pseudo-empirical breakdown sample.
    Synth {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        records: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo study.
    Experiment {
        #[arg(value_parser = ["table3", "table5", "censoring", "compare", "regression"])]
        kind: String,
    },
    /// Overlay chart and quantile comparison of one or two estimates.
    Report {
        /// Estimate JSON or `scale,shape`.
        #[arg(long)]
        a: Option<String>,
        #[arg(long)]
        b: Option<String>,
    },
    /// Events CSV to report bundle in one go. `--config` may also name a
    /// manifest written by an earlier run.
    Pipeline {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        compare_input: Option<PathBuf>,
        #[arg(long, value_parser = ["cfb", "plm"])]
        method: Option<String>,
        #[command(flatten)]
        detection: DetectionFlags,
    },
    /// Repeat a recorded run from its manifest.
    Rerun { manifest: PathBuf },
}

/// Missing required settings; reported with exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn need<T>(v: Option<T>, flag: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| Usage(format!("missing {flag} (flag or config key)")).into())
}

/// Config file contents as JSON, or an empty object.
fn config_value(path: Option<&Path>) -> anyhow::Result<serde_json::Value> {
    match path {
        Some(p) => Ok(read_json(p)?),
        None => Ok(serde_json::json!({})),
    }
}

fn from_value<T: DeserializeOwned>(v: serde_json::Value) -> anyhow::Result<T> {
    serde_json::from_value(v).map_err(|e| Usage(format!("invalid config: {e}")).into())
}

fn get<T: DeserializeOwned>(v: &serde_json::Value, key: &str) -> anyhow::Result<Option<T>> {
    match v.get(key) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(x) => from_value(x.clone()).map(Some),
    }
}

fn method(s: Option<String>, fallback: Option<Method>) -> Method {
    s.and_then(|m| m.parse().ok()).or(fallback).unwrap_or(Method::Cfb)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let clock = match &cli.fixed_clock {
        Some(stamp) => Clock::fixed(stamp)?,
        None => Clock::System,
    };
    let cfg = config_value(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { input, out, detection } => {
            let mut d: DetectionConfig = get(&cfg, "detection")?.unwrap_or_default();
            detection.apply(&mut d);
            let c = IngestConfig {
                input: need(input.or(get(&cfg, "input")?), "--input")?,
                out: need(out.or(get(&cfg, "out")?), "--out")?,
                detection: d,
            };
            ingest(&c, &clock)?;
        }
        Command::Detect { minutes, out, detection } => {
            let mut d: DetectionConfig = get(&cfg, "detection")?.unwrap_or_default();
            detection.apply(&mut d);
            let c = DetectConfig {
                minutes: need(minutes.or(get(&cfg, "minutes")?), "--minutes")?,
                out: need(out.or(get(&cfg, "out")?), "--out")?,
                detection: d,
            };
            detect(&c, &clock)?;
        }
        Command::Estimate {
            detection,
            out,
            method: m,
            imin,
            imax,
            starts,
        } => {
            let mut fit: FitOptions = get(&cfg, "fit")?.unwrap_or_default();
            if let Some(s) = starts {
                fit.starts = s;
            }
            let bounds = match (imin, imax) {
                (Some(lo), Some(hi)) => Some(Bounds::new(lo, hi)?),
                _ => get(&cfg, "bounds")?,
            };
            let c = EstimateConfig {
                detection: need(detection.or(get(&cfg, "detection")?), "--detection")?,
                out: need(out.or(get(&cfg, "out")?), "--out")?,
                method: method(m, get(&cfg, "method")?),
                bounds,
                fit,
            };
            estimate(&c, &clock)?;
        }
        Command::Synth {
            lambda,
            gamma,
            records,
            out,
        } => {
            let base: Option<WeibullParams> = get(&cfg, "params")?;
            let scale = need(lambda.or(base.map(|p| p.scale)), "--lambda")?;
            let shape = need(gamma.or(base.map(|p| p.shape)), "--gamma")?;
            let c = SynthConfig {
                params: WeibullParams::new(scale, shape)?,
                records: need(records.or(get(&cfg, "records")?), "--records")?,
                seed: need(cli.seed.or(get(&cfg, "seed")?), "--seed")?,
                out: need(out.or(get(&cfg, "out")?), "--out")?,
                demand: get::<SurrogateDemand>(&cfg, "demand")?.unwrap_or_default(),
                bounds: get(&cfg, "bounds")?,
            };
            synth(&c, &clock)?;
        }
        Command::Experiment { kind } => {
            let settings = cli.config.is_some().then_some(cfg);
            let mut experiment = Experiment::resolve(&kind, settings).map_err(|e| Usage(e.to_string()))?;
            if let Some(seed) = cli.seed {
                experiment.set_seed(seed);
            }
            let c = ExperimentConfig {
                experiment,
                out_dir: need(cli.out_dir, "--out-dir")?,
            };
            commands::experiment(&c, &clock)?;
        }
        Command::Report { a, b } => {
            let c = ReportConfig {
                a: need(a.or(get(&cfg, "a")?), "--a")?,
                b: b.or(get(&cfg, "b")?),
                out_dir: need(cli.out_dir.or(get(&cfg, "out_dir")?), "--out-dir")?,
                bounds: get(&cfg, "bounds")?,
                quantile_levels: get(&cfg, "quantile_levels")?.unwrap_or_else(|| QUANTILE_LEVELS.to_vec()),
            };
            report(&c, &clock)?;
        }
        Command::Pipeline {
            input,
            compare_input,
            method: m,
            detection,
        } => {
            if cfg.get("subcommand").is_some() {
                let manifest = RunManifest::read(need(cli.config.as_deref(), "--config")?)?;
                rerun(&manifest, cli.out_dir.as_deref())?;
                return Ok(());
            }
            let mut cfg = cfg;
            if let Some(obj) = cfg.as_object_mut() {
                if let Some(i) = input {
                    obj.insert("input".into(), serde_json::to_value(i)?);
                }
                if let Some(d) = cli.out_dir {
                    obj.insert("out_dir".into(), serde_json::to_value(d)?);
                }
                if !obj.contains_key("input") {
                    need(None::<()>, "--input")?;
                }
                if !obj.contains_key("out_dir") {
                    need(None::<()>, "--out-dir")?;
                }
            }
            let mut c: PipelineConfig = from_value(cfg)?;
            if compare_input.is_some() {
                c.compare_input = compare_input;
            }
            if let Some(m) = m {
                c.method = method(Some(m), None);
            }
            detection.apply(&mut c.detection);
            pipeline(&c, &clock)?;
        }
        Command::Rerun { manifest } => {
            rerun(&RunManifest::read(&manifest)?, cli.out_dir.as_deref())?;
        }
    }
    Ok(())
}

fn exit_status(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<stocap::Error>() {
        Some(e) if e.is_io() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
