use chrono::NaiveDate;
use thiserror::Error;

/// Errors raised while ingesting, windowing or centring input data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("malformed CSV at row {row}: {message}")]
    MalformedCsv { row: usize, message: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("window `{0}` does not overlap the data range")]
    EmptyWindow(String),
    #[error("unknown stream label `{0}`")]
    UnknownLabel(String),
    #[error("column `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),
    #[error("at least 2 rows are required, got {0}")]
    TooFewRows(usize),
    #[error("invalid matrix: {0}")]
    Shape(String),
}

/// Errors from the penalized spline smoother.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothError {
    #[error("invalid basis size: n = {n}, k = {k} (need n >= 4 and 4 <= k <= n)")]
    InvalidBasisSize { n: usize, k: usize },
    #[error("penalized normal equations are singular")]
    SingularSystem,
    #[error("response length {got} does not match basis rows {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("response contains non-finite values")]
    NonFinite,
    #[error("smoothing parameter must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("residuals are degenerate (zero variance)")]
    DegenerateResiduals,
    #[error("at least 3 residuals are required, got {0}")]
    TooShort(usize),
}

/// Errors from constructing the temporal weight matrix.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("no correlations to aggregate")]
    EmptyInput,
    #[error("correlation {0} is outside [-1, 1]")]
    OutOfRange(f64),
    #[error("rho must satisfy |rho| < 1, got {0}")]
    InvalidRho(f64),
    #[error("matrix is not positive semi-definite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("matrix is not square or not symmetric")]
    NotSymmetric,
}

/// Errors from the decomposition itself.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("SVD failed to converge")]
    ConvergenceFailure,
    #[error("all singular values are zero")]
    AllZero,
    #[error("rank {k} out of bounds (1..={r})")]
    RankOutOfBounds { k: usize, r: usize },
    #[error("at least 2 components are required, got {0}")]
    TooFewComponents(usize),
    #[error("component {component} does not exist ({available} available)")]
    NoSuchComponent { component: usize, available: usize },
    #[error("input contains non-finite values")]
    NonFinite,
}

/// Errors from comparison against reference indicators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least 3 observations are required, got {0}")]
    TooFewObservations(usize),
    #[error("ranks are degenerate (constant input)")]
    DegenerateRanks,
    #[error("score and reference dates do not overlap")]
    NoOverlap,
    #[error("at least 4 streams are required for outlier flagging, got {0}")]
    TooFewStreams(usize),
    #[error("outlier flagging expects a T-mode result")]
    NotTMode,
    #[error("reference comparison expects date-indexed (S-mode) scores")]
    NotSMode,
    #[error("reference series: {0}")]
    InvalidReference(String),
    #[error(transparent)]
    Pca(#[from] PcaError),
}

/// Configuration problems surfaced by the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("duplicate analysis name `{0}`")]
    DuplicateAnalysis(String),
    #[error("analysis `{analysis}` references unknown stream `{stream}`")]
    UnknownStream { analysis: String, stream: String },
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FailureKind {
    Config,
    Data,
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Config => 1,
            FailureKind::Data => 2,
            FailureKind::Numerical => 3,
        }
    }
}

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing output: {0}")]
    MissingOutput(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn kind(&self) -> FailureKind {
        match self {
            Error::Config(_) => FailureKind::Config,
            Error::Data(_) | Error::Io { .. } | Error::MissingOutput(_) => FailureKind::Data,
            Error::Diagnostics(DiagnosticsError::InvalidReference(_))
            | Error::Diagnostics(DiagnosticsError::NoOverlap) => FailureKind::Data,
            Error::Smooth(SmoothError::LengthMismatch { .. })
            | Error::Smooth(SmoothError::NonFinite) => FailureKind::Data,
            Error::Smooth(_) | Error::Weight(_) | Error::Pca(_) | Error::Diagnostics(_) => {
                FailureKind::Numerical
            }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
