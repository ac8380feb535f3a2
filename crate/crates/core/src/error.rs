use thiserror::Error;

/// Errors raised by the view-selection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid camera `{id}`: {reason}")]
    InvalidCamera { id: String, reason: String },

    #[error("camera `{0}` looks straight down; its ground axis is undefined")]
    DegenerateAxis(String),

    #[error("shape mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    ShapeMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("duplicate camera id `{0}`")]
    DuplicateCamera(String),

    #[error("unknown camera id `{0}`")]
    UnknownCamera(String),

    #[error("unknown frame id {0}")]
    UnknownFrame(u64),

    #[error("empty region: no visible cells to average over")]
    EmptyRegion,

    #[error("cover rate undefined: no persons in any frame")]
    UndefinedCoverRate,

    #[error("MODA undefined: ground truth is empty")]
    UndefinedModa,

    #[error("length mismatch: {0} predictions vs {1} ground-truth values")]
    LengthMismatch(usize, usize),

    #[error("no unselected cameras remain")]
    NoCandidates,

    #[error("not enough unselected cameras: need {needed}, have {available}")]
    InsufficientCandidates { needed: usize, available: usize },

    #[error("brute-force budget exceeded: {subsets} subsets > {budget}")]
    BudgetExceeded { subsets: u128, budget: u128 },

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
