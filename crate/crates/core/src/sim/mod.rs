//! Deterministic discrete-event simulator.
//!
//! A run is fully determined by its [`SimConfig`] (seed included): the same
//! configuration yields a byte-identical [`MetricsLog`].

pub mod config;
pub mod events;
pub mod metrics;
pub mod mm1;
pub mod polling;
pub mod random_access;
pub mod rng;
pub mod sweep;
pub mod traffic;

use thiserror::Error;

pub use config::{
    AccessSpec, ChannelSpec, ConfigError, SimConfig, StreamSpec, TimingSpec, TrafficKind,
};
pub use metrics::{InstanceMetrics, MetricsLog, MetricsRow};
pub use mm1::{mm1_age_oracle, mm1_sweep, simulate_mm1, Discipline, Mm1Point};
pub use sweep::{sweep, SweepAxis, SweepPoint};

use crate::aoi::AoiError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Event(#[from] events::PastEvent),
    #[error(transparent)]
    Aoi(#[from] AoiError),
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
}

/// Validates `cfg` and runs it with the configured access scheme.
pub fn run(cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    cfg.validate()?;
    match cfg.access {
        AccessSpec::Polling { .. } => Ok(polling::run_polling(cfg, false)?.0),
        AccessSpec::RandomAccess { .. } => random_access::run_random_access(cfg),
    }
}
