use thiserror::Error;

use crate::units::TimeNs;

/// Errors surfaced by the simulator library.
#[derive(Debug, Error)]
pub enum SimError {
    /// Invalid model or run parameters (non-stochastic Markov rows,
    /// dimension mismatches, bad ladders, holdback >= window, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed external data (empty or unsorted traces, bad CSV).
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A timeline query outside the covered horizon.
    #[error("range error: queried [{from}, {to}] outside horizon {horizon}")]
    Range {
        from: TimeNs,
        to: TimeNs,
        horizon: TimeNs,
    },

    /// A numeric-domain violation (nonpositive rates in log laws,
    /// empty quality sequences).
    #[error("domain error: {0}")]
    Domain(String),

    /// An instance larger than an enumeration guard allows.
    #[error("guard error: {0}")]
    Guard(String),

    /// A session ran past the bandwidth covered by its timelines.
    #[error("horizon error: {0}")]
    Horizon(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
