use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter space: {0}")]
    InvalidParameterSpace(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter sample out of bounds: component {index} = {value} not in [{lower}, {upper}]")]
    ParameterOutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("point (x={x}, t={t}) lies outside the problem domain")]
    PointOutOfDomain { x: f64, t: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("derivative {which} is not available for this model/input layout")]
    DerivativeUnavailable { which: &'static str },

    #[error("snake frequency must be nonzero (|a| >= 1e-6)")]
    ZeroSnakeFrequency,

    #[error("non-finite {term} residual at (x={x}, t={t}), xi={xi:?}")]
    NonFiniteResidual {
        term: &'static str,
        x: f64,
        t: f64,
        xi: Vec<f64>,
    },

    #[error("non-finite loss at outer iteration {iteration}; last good checkpoint retained at {checkpoint:?}")]
    NonFiniteLoss {
        iteration: usize,
        checkpoint: Option<PathBuf>,
    },

    #[error("Newton iteration did not converge: {0}")]
    NewtonDiverged(String),

    #[error("unknown problem \"{0}\" (expected one of: bistable, diffusion, reaction_diffusion)")]
    UnknownProblem(String),

    #[error("invalid config: {violations:?}")]
    InvalidConfig { violations: Vec<String> },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("csv format error in {path:?}: {message}")]
    CsvFormat { path: PathBuf, message: String },

    #[error("missing artifact: {0:?}")]
    MissingArtifact(PathBuf),

    #[error("evaluation grids do not match: {0}")]
    GridMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
