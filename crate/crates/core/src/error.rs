use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry leaves the unit cell: {0}")]
    GeometryOutOfCell(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate element {element}: {detail}")]
    DegenerateElement { element: usize, detail: String },

    #[error("surface orientation error: {0}")]
    Orientation(String),

    #[error("non-conforming patch topology: {0}")]
    Topology(String),

    #[error("{0} is not implemented")]
    NotImplemented(&'static str),

    #[error("kernel evaluated at the singular point z = 0")]
    SingularEvaluation,

    #[error("correction fit failed: {0}")]
    FittingFailure(String),

    #[error("assembly produced a non-finite entry for elements ({test}, {trial})")]
    Assembly { test: usize, trial: usize },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("pivoted Cholesky breakdown: diagonal residual {residual:e} at pivot {pivot}")]
    NumericalBreakdown { pivot: usize, residual: f64 },

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("line search failed after {halvings} halvings (J0 = {j0:e}, best probe = {best:e})")]
    LineSearchFailure { halvings: usize, j0: f64, best: f64 },

    #[error("non-finite shape functional")]
    NonFinite,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("kernel cache not found at {0}")]
    MissingKernelCache(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
