use std::path::PathBuf;

/// Errors raised anywhere in the scenario pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: unknown farm id `{farm_id}`")]
    UnknownFarm {
        path: PathBuf,
        line: u64,
        farm_id: String,
    },

    #[error("{path}:{line}: timestamps must be non-decreasing")]
    NonMonotoneTimestamps { path: PathBuf, line: u64 },

    #[error("invalid farm registry: {0}")]
    InvalidRegistry(String),

    #[error("window [{start}, {end}) selects no timestamps")]
    EmptyWindow { start: String, end: String },

    #[error("instant {0} is outside the panel")]
    OutOfPanel(String),

    #[error("feature spec produces no features besides the intercept")]
    DegenerateSpec,

    #[error("insufficient history for farm {farm} horizon {tau}: {usable} usable rows, need {required}")]
    InsufficientHistory {
        farm: usize,
        tau: usize,
        usable: usize,
        required: usize,
    },

    #[error("feature `{0}` is unavailable at the requested instant")]
    UnavailableFeature(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("empirical CDF needs finite samples, got {0}")]
    NonFiniteSample(f64),

    #[error("empty input")]
    EmptyInput,

    #[error("too few complete rows for correlation estimate: {rows} < {required}")]
    TooFewRows { rows: usize, required: usize },

    #[error("correlation matrix could not be factorized even with jitter {0:e}")]
    FactorizationFailed(f64),

    #[error("invalid oracle spec: {0}")]
    InvalidOracle(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("requested {requested} scenarios but the bundle holds {available}")]
    TooManyScenarios { requested: usize, available: usize },

    #[error("bundle format: {0}")]
    BundleFormat(String),

    #[error("bundle version {found} is not supported (expected {expected})")]
    BundleVersion { found: u32, expected: u32 },

    #[error("bundle is truncated: declared {declared} bytes, found {found}")]
    BundleTruncated { declared: u64, found: u64 },

    #[error("bundle checksum mismatch")]
    BundleChecksum,

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
