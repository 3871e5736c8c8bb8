use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{function} is undefined for x = {x}")]
    Domain { function: &'static str, x: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("back-reconstruction Gram matrix singular after {0} draws")]
    SingularInitialization(usize),

    #[error("non-positive Gamma rate in {0}")]
    NonPositiveRate(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("ELBO decreased at iteration {iteration}: {previous} -> {current}")]
    ElboDecrease {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("all {0} restarts failed")]
    AllRestartsFailed(usize),

    #[error("reference maps are singular (condition number {0:e})")]
    SingularReference(f64),

    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("non-finite value at offset {0} of payload")]
    NonFiniteValue(usize),

    #[error("CSV parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line interface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => 1,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::TruncatedFile { .. }
            | Error::NonFiniteValue(_)
            | Error::CsvParse { .. }
            | Error::Io(_)
            | Error::DimensionMismatch(_)
            | Error::ZeroVariance(_) => 2,
            _ => 3,
        }
    }
}
