use thiserror::Error;

/// Errors raised by the simulation engine and its configuration.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at t={fire_time} but clock is already at t={now}")]
    ScheduleInPast { fire_time: f64, now: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
