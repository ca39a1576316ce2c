use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample too short: need {needed} points, got {got}")]
    SampleTooShort { needed: usize, got: usize },

    #[error("malformed message: {0}")]
    MalformedMessage(String),

    #[error("message exceeds budget: {refs} refs (max {max_refs}), {bits} bits (max {max_bits})")]
    MessageTooLarge {
        refs: usize,
        max_refs: usize,
        bits: usize,
        max_bits: usize,
    },

    #[error("net too large: {size} points exceeds the limit of {limit}")]
    NetTooLarge { size: f64, limit: f64 },

    #[error("coordinate {index} = {value} is outside [-1, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("target is not in the symmetric hull (minimum sup-norm {min_linf:.6})")]
    Infeasible { min_linf: f64 },

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("lower-bound construction failed: {0}")]
    Construction(String),

    #[error("bound violated: {0}")]
    BoundViolated(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
