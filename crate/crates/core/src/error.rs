use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid fraction: {0}")]
    InvalidFraction(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no fixed point: x = exp(lambda x) has no solution for lambda = {0} > 1/e")]
    NoFixedPoint(f64),
    #[error("supercritical edge probability: {0} > 1")]
    SupercriticalEdgeProbability(f64),
    #[error("degenerate ground truth: {0}")]
    DegenerateGroundTruth(&'static str),
    #[error("invalid subset: vertex {vertex} out of range for n = {n}")]
    InvalidSubset { vertex: usize, n: usize },
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),
    #[error("invalid variance: {0} < 0")]
    InvalidVariance(f64),
    #[error("undefined ratio: mu / lambda with lambda = 0 and mu = {0}")]
    UndefinedRatio(f64),
    #[error("bracket miss: {0}")]
    BracketMiss(String),
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),
    #[error("enumeration guard: n = {n} exceeds {limit}")]
    EnumerationGuard { n: usize, limit: usize },
    #[error("the local-algorithm bound needs kappa < 1/2, got {0}")]
    OutsideHypothesis(f64),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors produced by size guards (combinatorial or enumeration limits).
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Error::InstanceTooLarge(_)
                | Error::EnumerationGuard { .. }
                | Error::SupercriticalEdgeProbability(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
