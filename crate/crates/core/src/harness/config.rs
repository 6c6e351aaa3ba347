//! Harness process configuration.

use std::net::SocketAddr;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::emulator::SensorProfile;
use super::HarnessError;
use crate::protocol::fragment::DEFAULT_MTU_PAYLOAD;
use crate::protocol::sync::DEFAULT_SYNC_ROUNDS;
use crate::protocol::wire::MAX_PAYLOAD;
use crate::scheduling::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Destination,
    Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub role: Role,
    pub bind: SocketAddr,
    /// Destination address; required for sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<SocketAddr>,
    #[serde(default)]
    pub source_id: u16,
    /// Sensor streams of a source, one instance each.
    #[serde(default)]
    pub profiles: Vec<SensorProfile>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_sync_rounds")]
    pub sync_rounds: usize,
    /// Re-run clock sync with every source this often; off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resync_s: Option<f64>,
    #[serde(default = "default_mtu")]
    pub mtu_payload: usize,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_path: Option<PathBuf>,
    /// Carried in the reproducibility block of experiment files.
    #[serde(skip)]
    pub seed: u64,
    /// Emulator period jitter as a fraction of the period.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "default_policy")]
    pub policy: Policy,
}

fn default_timeout_ms() -> u64 {
    300
}

fn default_sync_rounds() -> usize {
    DEFAULT_SYNC_ROUNDS
}

fn default_mtu() -> usize {
    DEFAULT_MTU_PAYLOAD
}

fn default_policy() -> Policy {
    Policy::Mw
}

impl HarnessConfig {
    pub fn destination(bind: SocketAddr, duration_s: f64) -> Self {
        HarnessConfig {
            role: Role::Destination,
            bind,
            peer: None,
            source_id: 0,
            profiles: Vec::new(),
            timeout_ms: default_timeout_ms(),
            sync_rounds: default_sync_rounds(),
            resync_s: None,
            mtu_payload: default_mtu(),
            duration_s,
            metrics_path: None,
            seed: 0,
            jitter: 0.0,
            policy: default_policy(),
        }
    }

    pub fn source(
        peer: SocketAddr,
        source_id: u16,
        profiles: Vec<SensorProfile>,
        duration_s: f64,
    ) -> Self {
        HarnessConfig {
            role: Role::Source,
            bind: "127.0.0.1:0".parse().expect("literal address"),
            peer: Some(peer),
            source_id,
            profiles,
            ..Self::destination("127.0.0.1:0".parse().expect("literal address"), duration_s)
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut problems = Vec::new();
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            problems.push("duration_s: must be positive".to_string());
        }
        if self.timeout_ms == 0 {
            problems.push("timeout_ms: must be positive".to_string());
        }
        if self.sync_rounds == 0 {
            problems.push("sync_rounds: must be positive".to_string());
        }
        if self.mtu_payload == 0 || self.mtu_payload > MAX_PAYLOAD {
            problems.push("mtu_payload: out of range".to_string());
        }
        if !(0.0..1.0).contains(&self.jitter) {
            problems.push("jitter: must lie in [0, 1)".to_string());
        }
        if self.resync_s.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
            problems.push("resync_s: must be positive".to_string());
        }
        if self.role == Role::Source {
            if self.peer.is_none() {
                problems.push("peer: required for a source".to_string());
            }
            if self.profiles.is_empty() {
                problems.push("profiles: a source needs at least one".to_string());
            }
            let mut types: Vec<u8> = self.profiles.iter().map(|p| p.info_type()).collect();
            types.sort_unstable();
            types.dedup();
            if types.len() != self.profiles.len() {
                problems.push("profiles: each profile may appear once".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(problems))
        }
    }
}
