//! The protocol automata over real UDP sockets.
//!
//! One destination process polls any number of source processes. Each
//! process owns its automata and socket on a single task; sensor emulators
//! and the socket reader are producer threads feeding that task through a
//! channel. Clocks are process-local and monotonic: the destination runs an
//! on-wire sync exchange with every source that registers and corrects the
//! generation timestamps it receives by the estimated offset.

pub mod clock;
pub mod config;
pub mod destination;
pub mod emulator;
pub mod source;

use std::io;

use thiserror::Error;

pub use config::{HarnessConfig, Role};
pub use destination::{
    delivery_log_path, run_destination, DeliveryRecord, DestinationSummary, InstanceSummary,
};
pub use emulator::{verify_payload, SensorEmulator, SensorProfile};
pub use source::{run_source, SourceSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid harness config: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("destination {0} never answered registration")]
    Unreachable(String),
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error("metrics output: {0}")]
    Metrics(#[from] csv::Error),
}
