use thiserror::Error;

/// Errors raised by the estimation and interval routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too short: need at least {needed} points, got {got}")]
    GridTooShort { needed: usize, got: usize },

    #[error("curves are not observed on the same grid")]
    GridMismatch,

    #[error("PCA semi-metric has not been fitted")]
    SpecNotFitted,

    #[error("invalid number of principal components: requested {requested}, at most {max} allowed")]
    InvalidComponents { requested: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty kernel neighborhood{} (nearest curve at distance {min_distance})", fmt_index(.index))]
    EmptyNeighborhood { index: Option<usize>, min_distance: f64 },

    #[error("too few curves in the kernel neighborhood: {effective_count} (need {needed})")]
    InsufficientSupport { effective_count: usize, needed: usize },

    #[error("all pairwise distances are zero")]
    DegenerateDistances,

    #[error("estimating-function scores are degenerate")]
    DegenerateScores,

    #[error("could not bracket the {side} interval endpoint")]
    BracketingFailed { side: &'static str },

    #[error("profiled linear design is rank deficient")]
    SingularDesign,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}{}: {message}", fmt_column(.column))]
    Parse {
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("report serialization failed: {0}")]
    Report(String),
}

fn fmt_index(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" at training sample {i}"),
        None => String::new(),
    }
}

fn fmt_column(column: &Option<usize>) -> String {
    match column {
        Some(c) => format!(", column {c}"),
        None => String::new(),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
