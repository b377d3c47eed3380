use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Each variant maps to a stable
/// upper-case code (see [`Error::code`]) which the CLI surfaces verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("uncertainty set has no scenarios")]
    EmptySet,
    #[error("scenario {scenario}, atom {atom}: rate {rate} is negative")]
    NegativeRate {
        scenario: usize,
        atom: usize,
        rate: f64,
    },
    #[error("scenario {scenario}, atom {atom}: jump vector is zero")]
    ZeroJump { scenario: usize, atom: usize },
    #[error("scenario {scenario}: non-finite entry in {field}")]
    NonFinite {
        scenario: usize,
        field: &'static str,
    },
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid scheme configuration: {0}")]
    InvalidScheme(String),
    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),
    #[error("scenario {scenario}, atom {atom}: jump is shorter than half a grid cell")]
    GridTooCoarse { scenario: usize, atom: usize },
    #[error("time step {dt:e} is unusable for horizon {horizon}")]
    CflUnsatisfiable { dt: f64, horizon: f64 },
    #[error("scenario {scenario}: covariance is not diagonally dominant on axes ({i}, {j})")]
    NonmonotoneDiffusion { scenario: usize, i: usize, j: usize },
    #[error("no snapshot stored at t = {0}")]
    NoSnapshot(f64),
    #[error("output time {t} outside [0, {horizon}]")]
    OutputTimeOutOfRange { t: f64, horizon: f64 },
    #[error("lambda = {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("time must be finite and non-negative, got {0}")]
    InvalidTime(f64),
    #[error("test function does not vanish at the origin (f(0) = {0})")]
    TestFunctionNotZero(f64),
    #[error("cylinder functional: {0}")]
    InvalidFunctional(String),
    #[error(
        "tensor grid needs {axes} axes / {nodes} nodes, budget is {max_axes} axes / {budget} nodes"
    )]
    DimensionOverflow {
        axes: usize,
        nodes: usize,
        max_axes: usize,
        budget: usize,
    },
    #[error("conditioning index {j} must lie in 1..{m}")]
    IndexOutOfRange { j: usize, m: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("largest eigenvalue {max_eig} is not below 1/gamma = {limit}")]
    NotBelowThreshold { max_eig: f64, limit: f64 },
    #[error("I - gamma X is singular (condition number {0:e})")]
    Singular(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("key `{key}`: {msg}")]
    Validation { key: String, msg: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptySet => "EMPTY_SET",
            Error::NegativeRate { .. } => "NEGATIVE_RATE",
            Error::ZeroJump { .. } => "ZERO_JUMP",
            Error::NonFinite { .. } => "NON_FINITE",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::InvalidGrid(_) => "INVALID_GRID",
            Error::InvalidScheme(_) => "INVALID_SCHEME",
            Error::InvalidPayoff(_) => "INVALID_PAYOFF",
            Error::GridTooCoarse { .. } => "GRID_TOO_COARSE",
            Error::CflUnsatisfiable { .. } => "CFL_UNSATISFIABLE",
            Error::NonmonotoneDiffusion { .. } => "NONMONOTONE_DIFFUSION",
            Error::NoSnapshot(_) => "NO_SNAPSHOT",
            Error::OutputTimeOutOfRange { .. } => "OUTPUT_TIME_OUT_OF_RANGE",
            Error::LambdaOutOfRange(_) => "LAMBDA_OUT_OF_RANGE",
            Error::InvalidTolerance(_) => "INVALID_TOLERANCE",
            Error::InvalidTime(_) => "INVALID_TIME",
            Error::TestFunctionNotZero(_) => "TEST_FUNCTION_NOT_ZERO",
            Error::InvalidFunctional(_) => "INVALID_FUNCTIONAL",
            Error::DimensionOverflow { .. } => "DIMENSION_OVERFLOW",
            Error::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            Error::NotSymmetric(_) => "NOT_SYMMETRIC",
            Error::NotBelowThreshold { .. } => "NOT_BELOW_THRESHOLD",
            Error::Singular(_) => "SINGULAR",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Validation { .. } => "VALIDATION_ERROR",
            Error::Io(_) => "IO_ERROR",
        }
    }
}
