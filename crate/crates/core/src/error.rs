use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric at ({row}, {col}): gap {gap:e}")]
    NonSymmetric { row: usize, col: usize, gap: f64 },

    #[error("symmetric eigensolver did not converge after {sweeps} sweeps")]
    EigFailure { sweeps: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("Cholesky factorization failed at every jitter level")]
    NotFactorizable,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("invalid probability vector: {0}")]
    BadDistribution(String),

    #[error("every weighted log-density is -inf; state is pathological")]
    AllUnderflow,

    #[error("decay rate {rho} must lie in (0, 1)")]
    DegenerateRate { rho: f64 },

    #[error("need at least 2 injected images, got {n0}")]
    TooFewInjected { n0: usize },

    #[error("need at least 2 components with positive probability, got {found}")]
    TooFewComponents { found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: parse error at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown configuration key `{key}`")]
    UnknownKey { key: String },

    #[error("`{key}` out of range: {message}")]
    Range { key: String, message: String },

    #[error("series is empty; nothing to plot")]
    EmptySeries,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
