use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]: need finite lo < hi")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid degree: {0}")]
    InvalidDegree(String),

    #[error("point {x} lies outside [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("adaptive interpolation hit the degree cap {cap}; last fresh-node residual {residual:e}")]
    DegreeCap { cap: usize, residual: f64 },

    #[error("proxies live on different intervals")]
    IntervalMismatch,

    #[error("graphs disagree on agent count: {0} vs {1}")]
    AgentCountMismatch(usize, usize),

    #[error("local constraint sets have empty intersection [{lo}, {hi}]")]
    InfeasibleConstraints { lo: f64, hi: f64 },

    #[error("protocol order violated: {0}")]
    ProtocolOrder(String),

    #[error("dissemination did not stop within {rounds} rounds (last max ratio error {last_error:e})")]
    NonConvergence { rounds: usize, last_error: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("polynomial is identically zero")]
    ZeroPolynomial,

    #[error("trace has no transmission records")]
    MissingTransmissions,

    #[error("need ≥ {needed} points, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
