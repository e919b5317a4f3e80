use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("line of sight misses the Earth")]
    MissesEarth,

    #[error("ground point maps outside the detector (row {row:.3}, col {col:.3})")]
    OutsideFrame { row: f64, col: f64 },

    #[error("iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("image chip is too homogeneous to correlate")]
    Homogeneous,

    #[error("correlation peak lies on the surface border")]
    PeakOnEdge,

    #[error("band {band} could not be registered: every chip is homogeneous")]
    BandUncorrectable { band: usize },

    #[error("overlap fraction {fraction:.4} is too small to correlate")]
    InsufficientOverlap { fraction: f64 },

    #[error("normal equations are singular")]
    SingularNormalEquations,

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
