use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("pair index {index} out of range for {pairs} pairs")]
    PairIndex { index: usize, pairs: usize },

    #[error("cannot coarsen {what} from {from} to {to}")]
    Coarsen {
        what: &'static str,
        from: usize,
        to: usize,
    },

    #[error("observation time {time} is not on the grid with step {step}")]
    OffGrid { time: f64, step: f64 },

    #[error("non-finite log-likelihood value {0}")]
    NonFinite(f64),

    #[error("odd corner count {0}: corners must come in pairs")]
    OddCorners(usize),

    #[error("zero denominator for corner {corner} in self-normalized ratio")]
    ZeroDenominator { corner: usize },

    #[error("non-positive normalizer {value} for corner {corner}")]
    Normalizer { corner: usize, value: f64 },

    #[error("degenerate design matrix")]
    DegenerateDesign,

    #[error("unstable mode k={k}: theta {theta} >= pi^2 k^2")]
    UnstableMode { k: usize, theta: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("fixture {0} already exists (use --force to overwrite)")]
    FixtureExists(String),

    #[error("missing fixture: {0}")]
    MissingFixture(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
