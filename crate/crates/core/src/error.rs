use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("the sampled manifold is empty: {0}")]
    EmptyManifold(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{solver} did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        best_residual: f64,
    },

    #[error("vector field for coordinate {coordinate} is degenerate on every row")]
    DegenerateField { coordinate: usize },

    #[error("eigensolver failed while computing coordinate {coordinate}: {source}")]
    Coordinate {
        coordinate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("vector field is zero everywhere; the penalty cannot be scaled")]
    ZeroPenalty,

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("point cloud has no ground-truth coordinates")]
    MissingTruth,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::DegenerateField { .. }
            | Error::ZeroPenalty
            | Error::NotPositiveDefinite(_)
            | Error::UndefinedCorrelation(_) => true,
            Error::Coordinate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// True for errors caused by invalid user-supplied parameters or data.
    pub fn is_parameter(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_) | Error::EmptyManifold(_) | Error::Parse { .. } | Error::MissingTruth
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
