//! Freshness-first networking: Age-of-Information tracking, LCFS queueing,
//! polling with Max-Weight scheduling, a deterministic network simulator and a
//! UDP harness that runs the same protocol automata over real sockets.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod analyze;
pub mod aoi;
pub mod experiment;
pub mod harness;
pub mod instance;
pub mod protocol;
pub mod queueing;
pub mod scheduling;
pub mod sim;
pub mod time;

pub use aoi::{naoi, AgeTracker, NetworkAgeReport};
pub use instance::InstanceId;
pub use queueing::Update;
pub use time::{Micros, Timestamp};
