use std::path::PathBuf;

/// Errors produced by the denoising pipeline and its supporting stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input {value} outside the channel input range [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("sample {value} not covered by the evaluation grid [{lo}, {hi}]")]
    GridCoverage { value: f64, lo: f64, hi: f64 },

    #[error("LP solver stopped after {iterations} iterations without reaching optimality ({detail})")]
    SolverNonConvergence { iterations: usize, detail: String },

    #[error("tuple alphabet of {states} states exceeds the cap of {cap}; use a coarser Delta")]
    AlphabetCap { states: usize, cap: usize },

    #[error("channel matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error("histogram bins are not aligned with the output quantizer: {0}")]
    Misaligned(String),

    #[error("malformed PGM at byte {offset}: {reason}")]
    Pgm { offset: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
