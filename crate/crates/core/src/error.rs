use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("non-positive price {price} on {date} minute {minute}")]
    NonPositivePrice { date: String, minute: u32, price: f64 },

    #[error("duplicate tick on {date} minute {minute}")]
    DuplicateTick { date: String, minute: u32 },

    #[error("need at least {need} observations, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("missing grid point at minute {minute} on {date}")]
    MissingGridPoint { date: String, minute: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter point: {0}")]
    InvalidParams(String),

    #[error("degenerate quantile |Q_t| = {value:e} at t = {t}")]
    DegenerateQuantile { t: usize, value: f64 },

    #[error("non-negative expected shortfall {value} at t = {t}")]
    NonNegativeEs { t: usize, value: f64 },

    #[error("zero denominator in scaling window ending at day {index}")]
    ZeroDenominator { index: usize },

    #[error("no feasible candidate among {evaluated} evaluated")]
    NoFeasibleCandidate { evaluated: usize },

    #[error("MCMC failure: {0}")]
    Mcmc(String),

    #[error("singular design matrix: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
