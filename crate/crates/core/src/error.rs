use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid bounds [{min}, {max}]: lower bound must be below upper bound")]
    InvalidBounds { min: u32, max: u32 },
    #[error("unparseable header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("minute sequence is not contiguous at index {index}")]
    NonContiguous { index: usize },
    #[error("inconsistent product-limit input at intensity {level}: {reason}")]
    InconsistentPlm { level: u32, reason: String },
    #[error("no breakdowns available: {0}")]
    NoBreakdowns(&'static str),
    #[error("curves are defined on different level grids")]
    GridMismatch,
    #[error("reference curve is zero at every level")]
    ZeroReference,
    #[error("weights sum to zero")]
    ZeroWeight,
    #[error("design matrix is rank deficient; collinear columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("not enough observations: {rows} rows for {cols} columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("bisection failed: {0}")]
    Bisection(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("input {path} does not match the digest recorded in the manifest")]
    InputChanged { path: PathBuf },
    #[error("unusable manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input files or paths rather than
    /// by the computation itself.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::BadHeader { .. }
            | Error::InputChanged { .. }
            | Error::Manifest(_)
            | Error::Csv(_)
            | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
