//! Packet-level simulator of information dissemination in wireless sensor
//! fields where accuracy requirements relax with distance.
//!
//! The crate provides five forwarding policies (flooding, Filtercast,
//! RFiltercast, unbiased and biased probabilistic forwarding), a broadcast
//! channel with contention and energy accounting, two ground-truth data
//! models, the distance-weighted error metric, and an experiment harness that
//! writes CSV.

pub mod channel;
pub mod error;
pub mod field;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use error::{Result, SimError};
pub use scenario::Scenario;
pub use sim::{run_once, RunOutput, RunSummary, Simulation, TraceSink};
