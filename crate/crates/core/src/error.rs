use chrono::{DateTime, Utc};
use thiserror::Error;

/// Errors produced by the valuation, bidding, simulation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid storage parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("invalid SoC grid: {0}")]
    InvalidGrid(String),

    #[error("state of charge {soc} MWh outside [{min}, {max}]")]
    SocOutOfRange { soc: f64, min: f64, max: f64 },

    #[error("marginal value curve increases at index {index} ({prev} -> {next})")]
    NonMonotone { index: usize, prev: f64, next: f64 },

    #[error("invalid price series: {0}")]
    InvalidSeries(String),

    #[error("horizon mismatch: {0}")]
    HorizonMismatch(String),

    #[error("degenerate SoC range [{lo}, {hi}]")]
    DegenerateRange { lo: f64, hi: f64 },

    #[error("SoC bid needs at least one segment")]
    ZeroSegments,

    #[error("reference profit {0} is not positive; utilization is undefined")]
    NonPositiveReference(f64),

    #[error("horizon of {len} periods exceeds the enumeration limit of {max}")]
    HorizonTooLong { len: usize, max: usize },

    #[error("invalid action grid: {0}")]
    InvalidActionGrid(String),

    #[error("invalid market instance: {0}")]
    InvalidMarket(String),

    #[error("infeasible market: {0}")]
    Infeasible(String),

    #[error("{source_name}: line {line}: {msg}")]
    Parse { source_name: String, line: u64, msg: String },

    #[error("{source_name}: missing interval at {at}")]
    Gap { source_name: String, at: DateTime<Utc> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input data
    /// (as opposed to infeasibility or I/O failures).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Infeasible(_) | Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
