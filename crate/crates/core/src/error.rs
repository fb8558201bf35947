use thiserror::Error;

/// Errors produced by the simulator and its checkers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration has no points")]
    EmptyConfiguration,
    #[error("point {index} has {found} coordinates, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("K = {k} is outside [1, N-2] for N = {n}")]
    InvalidK { n: usize, k: usize },
    #[error("inconsistent moments: sum_sq = {sum_sq} < |sum|^2/m = {bound}")]
    InconsistentMoments { sum_sq: f64, bound: f64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("no conditioning ball received any Monte Carlo hits")]
    InsufficientMass,
    #[error("no tail interval in the grid received any Monte Carlo hits")]
    InsufficientTailMass,
    #[error("bad initial configuration: {0}")]
    BadInitial(String),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
