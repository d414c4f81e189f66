use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("basis requires at least degree+1 functions per dimension: k={k}, degree={degree}")]
    InsufficientBasisFunctions { k: usize, degree: usize },

    #[error("degenerate bounding box: [{u_min}, {u_max}] x [{v_min}, {v_max}]")]
    DegenerateBbox {
        u_min: f64,
        u_max: f64,
        v_min: f64,
        v_max: f64,
    },

    #[error("dataset is empty or has no predictors")]
    EmptyDataset,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("split fraction {fraction} leaves an empty train or test set for n={n}")]
    DegenerateSplit { fraction: f64, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("GIG parameter out of range: a={a}, b={b} (requires a > 0, b >= 0)")]
    InvalidGigParameter { a: f64, b: f64 },

    #[error(
        "Cholesky factorization failed for group {group} at iteration {iteration} \
         after {attempts} jitter attempts (last jitter {last_jitter:e})"
    )]
    CholeskyFailure {
        group: usize,
        iteration: usize,
        attempts: usize,
        last_jitter: f64,
    },

    #[error("chain {chain_id} aborted: {source}")]
    ChainAborted {
        chain_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("convergence diagnostics need at least 2 chains, got {0}")]
    TooFewChains(usize),

    #[error("chain too short for diagnostics: length {len}, need at least {min}")]
    ChainTooShort { len: usize, min: usize },

    #[error("no draws supplied")]
    EmptyDraws,

    #[error("noise-surface error is undefined for m <= 3 (got m={0})")]
    NoNoisePredictors(usize),

    #[error("{k} folds exceed the {n} available rows")]
    TooManyFolds { k: usize, n: usize },

    #[error("tuning grid is empty")]
    EmptyGrid,

    #[error("missing required column '{0}' in input header")]
    MissingColumn(String),

    #[error("no usable rows after dropping non-finite values")]
    NoUsableRows,

    #[error("prediction requires the training standardization record")]
    MissingStandardization,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
