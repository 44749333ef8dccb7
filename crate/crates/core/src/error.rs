use thiserror::Error;

use crate::engine::SimTime;

/// A configuration problem, always attributed to the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Failures that abort a single simulation run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event scheduled in the past ({at} < clock {now})")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("departure requested from empty pool at node {0}")]
    EmptyPool(usize),
    #[error("internal logic error: {0}")]
    Internal(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("search error: {0}")]
    Search(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
