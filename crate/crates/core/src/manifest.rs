//! Run manifests: what was run, on which inputs, with which settings.
//!
//! A manifest stores the fully resolved configuration of a command together
//! with SHA-256 digests of every input and output file. Replaying it pins the
//! clock to the recorded start time, so charts that embed a timestamp come
//! out byte-identical as well.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "stocap";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// File name of the manifest inside an output directory.
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EPOCH: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn fixed(stamp: &str) -> Result<Self> {
        DateTime::parse_from_rfc3339(stamp)
            .map(|t| Clock::Fixed(t.with_timezone(&Utc)))
            .map_err(|e| Error::Manifest(format!("bad timestamp `{stamp}`: {e}")))
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Clock::Fixed(_))
    }

    pub fn now(&self) -> String {
        let t = match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        };
        t.to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Resolved configuration; enough to run the command again.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prng: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub fixed_clock: bool,
}

impl RunManifest {
    pub fn start(subcommand: &str, config: &impl Serialize, clock: &Clock) -> Result<Self> {
        Ok(RunManifest {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            subcommand: subcommand.into(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
            prng: None,
            started_at: clock.now(),
            finished_at: String::new(),
            fixed_clock: clock.is_fixed(),
        })
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>, prng: &str) -> Self {
        self.seeds = seeds;
        self.prng = Some(prng.into());
        self
    }

    pub fn record_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn finish<P: AsRef<Path>>(&mut self, outputs: &[P], clock: &Clock) -> Result<()> {
        self.outputs = outputs.iter().map(FileDigest::of).collect::<Result<_>>()?;
        self.finished_at = clock.now();
        Ok(())
    }

    /// Clock that reproduces the timestamps of the recorded run.
    pub fn replay_clock(&self) -> Result<Clock> {
        Clock::fixed(&self.started_at)
    }

    pub fn config_as<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.config.clone())
            .map_err(|e| Error::Manifest(format!("config does not fit `{}`: {e}", self.subcommand)))
    }

    /// Fails if any input changed since the manifest was written.
    pub fn verify_inputs(&self) -> Result<()> {
        for input in &self.inputs {
            if sha256_file(&input.path)? != input.sha256 {
                return Err(Error::InputChanged {
                    path: input.path.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_slice(&raw)?;
        if m.tool != TOOL_NAME {
            return Err(Error::Manifest(format!("written by `{}`, not {TOOL_NAME}", m.tool)));
        }
        Ok(m)
    }
}

/// Manifest location for a command that writes a single file.
pub fn sibling_manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create_file(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Opens `path` for a CSV-style writer callback and flushes afterwards.
pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create_file(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}
