//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Target position coincides with a station, making a range zero.
    #[error("degenerate geometry: target coincides with {station} {index}")]
    DegenerateGeometry { station: &'static str, index: usize },

    /// SINR normalization needs `s_max > s_min`.
    #[error("invalid SINR bounds: s_max ({s_max}) must exceed s_min ({s_min})")]
    InvalidSinrBounds { s_min: f64, s_max: f64 },

    #[error("correlation coefficient must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("SINR mean must be positive, got {0}")]
    NonPositiveSinrMean(f64),

    #[error("empty trajectory")]
    EmptyTrajectory,

    /// A filter covariance lost positive definiteness.
    #[error("filter divergence on channel {m}-{n} (target {k}): {reason}")]
    FilterDivergence {
        m: usize,
        n: usize,
        k: usize,
        reason: String,
    },

    /// Caller broke an API contract (wrong lengths, samples for unselected
    /// arms, zero play counters, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// BPSO could not produce a feasible position.
    #[error("no feasible super arm found (M_s={m_s}, N_s={n_s})")]
    Infeasible { m_s: usize, n_s: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
