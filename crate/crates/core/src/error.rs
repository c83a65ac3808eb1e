use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {found:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },

    #[error("invalid dimensions {0:?}: {1}")]
    InvalidDims((usize, usize, usize), &'static str),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scene has no scatterers and no interference")]
    EmptyScene,

    #[error("input has zero energy, cannot set a finite SNR")]
    ZeroEnergy,

    #[error("lp proximal map did not converge for |v| = {magnitude}, lambda = {lambda}, p = {p} after {iterations} iterations")]
    ProxNonConvergence {
        magnitude: f64,
        lambda: f64,
        p: f64,
        iterations: usize,
    },

    #[error("SVD failed to converge on slice {slice}")]
    SvdFailure { slice: usize },

    #[error("solver failed at iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid cognition wiring: {0}")]
    Wiring(String),

    #[error("unknown task: {0}")]
    UnknownTask(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("tensor file format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
