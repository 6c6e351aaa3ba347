//! Experiment description for the network simulator.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::protocol::fragment::DEFAULT_MTU_PAYLOAD;
use crate::protocol::wire::{HEADER_LEN, MAX_PAYLOAD};
use crate::queueing::QueueSpec;
use crate::scheduling::Policy;
use crate::time::Micros;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid simulation config: {}", .problems.join("; "))]
pub struct ConfigError {
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    Poisson,
    Periodic,
}

/// One information stream, replicated on every source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub info_type: u8,
    pub kind: TrafficKind,
    pub rate_hz: f64,
    /// Payload bytes per update.
    pub size: usize,
    /// Static admission limit applied after generation (a plain rate
    /// limiter, not an adaptive age-control protocol).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit_hz: Option<f64>,
}

impl StreamSpec {
    pub fn poisson(info_type: u8, rate_hz: f64, size: usize) -> Self {
        StreamSpec {
            info_type,
            kind: TrafficKind::Poisson,
            rate_hz,
            size,
            rate_limit_hz: None,
        }
    }

    pub fn periodic(info_type: u8, rate_hz: f64, size: usize) -> Self {
        StreamSpec {
            info_type,
            kind: TrafficKind::Periodic,
            rate_hz,
            size,
            rate_limit_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AccessSpec {
    Polling {
        policy: Policy,
        #[serde(default = "default_timeout_us")]
        timeout_us: u64,
        #[serde(default = "default_window_s")]
        window_s: f64,
    },
    RandomAccess {
        /// Attempt probability of a backlogged source at backoff stage zero.
        q: f64,
        /// Each collision or loss halves the attempt probability, up to this
        /// many times; a success resets it. Zero disables backoff.
        #[serde(default = "default_backoff")]
        max_backoff_stage: u32,
        /// Failed attempts after which the head update is discarded.
        #[serde(default = "default_retry_limit")]
        retry_limit: u32,
    },
}

fn default_timeout_us() -> u64 {
    crate::protocol::RT_TIMEOUT.0
}

fn default_window_s() -> f64 {
    0.5
}

fn default_backoff() -> u32 {
    6
}

fn default_retry_limit() -> u32 {
    7
}

impl AccessSpec {
    pub fn polling(policy: Policy) -> Self {
        AccessSpec::Polling {
            policy,
            timeout_us: default_timeout_us(),
            window_s: default_window_s(),
        }
    }

    pub fn random_access() -> Self {
        AccessSpec::RandomAccess {
            q: 1.0,
            max_backoff_stage: default_backoff(),
            retry_limit: default_retry_limit(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AccessSpec::Polling { .. } => "polling",
            AccessSpec::RandomAccess { .. } => "random_access",
        }
    }

    pub fn policy_label(&self) -> &'static str {
        match self {
            AccessSpec::Polling { policy, .. } => policy.label(),
            AccessSpec::RandomAccess { .. } => "none",
        }
    }
}

/// Per-source data success probabilities; source `i` uses
/// `success[i % success.len()]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub success: Vec<f64>,
    /// Also lose polls with the same probability.
    #[serde(default)]
    pub poll_loss: bool,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            success: vec![1.0],
            poll_loss: false,
        }
    }
}

impl ChannelSpec {
    pub fn success_for(&self, source: usize) -> f64 {
        self.success[source % self.success.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSpec {
    pub poll_tx_us: u64,
    pub turnaround_us: u64,
    pub rate_bps: f64,
}

impl Default for TimingSpec {
    fn default() -> Self {
        TimingSpec {
            poll_tx_us: 30,
            turnaround_us: 10,
            rate_bps: 12.0e6,
        }
    }
}

impl TimingSpec {
    /// Airtime of a frame carrying `payload` bytes plus the protocol header.
    pub fn frame_tx(&self, payload: usize) -> Micros {
        let bits = ((payload + HEADER_LEN) * 8) as f64;
        Micros(((bits / self.rate_bps) * 1e6).ceil().max(1.0) as u64)
    }

    pub fn poll_tx(&self) -> Micros {
        Micros(self.poll_tx_us)
    }

    pub fn turnaround(&self) -> Micros {
        Micros(self.turnaround_us)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_sources: u16,
    pub horizon_s: f64,
    /// Carried in the reproducibility block of experiment files and excluded
    /// from the config hash.
    #[serde(skip)]
    pub seed: u64,
    pub access: AccessSpec,
    pub queue: QueueSpec,
    pub traffic: Vec<StreamSpec>,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub timing: TimingSpec,
    #[serde(default = "default_mtu")]
    pub mtu_payload: usize,
}

fn default_mtu() -> usize {
    DEFAULT_MTU_PAYLOAD
}

impl SimConfig {
    /// `n` sources each generating Poisson 150-byte updates at `lambda_hz`.
    pub fn saturated(
        n: u16,
        lambda_hz: f64,
        access: AccessSpec,
        queue: QueueSpec,
        horizon_s: f64,
    ) -> Self {
        SimConfig {
            n_sources: n,
            horizon_s,
            seed: 0,
            access,
            queue,
            traffic: vec![StreamSpec::poisson(0, lambda_hz, 150)],
            channel: ChannelSpec::default(),
            timing: TimingSpec::default(),
            mtu_payload: DEFAULT_MTU_PAYLOAD,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Total generation rate of one source.
    pub fn lambda_hz(&self) -> f64 {
        self.traffic.iter().map(|s| s.rate_hz).sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                problems.push(msg.to_string());
            }
        };
        check(self.n_sources > 0, "n_sources: must be positive");
        check(
            self.horizon_s.is_finite() && self.horizon_s > 0.0,
            "horizon_s: must be positive",
        );
        check(
            !self.traffic.is_empty(),
            "traffic: at least one stream is required",
        );
        let mut types: Vec<u8> = self.traffic.iter().map(|s| s.info_type).collect();
        types.sort_unstable();
        types.dedup();
        check(
            types.len() == self.traffic.len(),
            "traffic.info_type: must be unique",
        );
        for s in &self.traffic {
            check(
                s.rate_hz.is_finite() && s.rate_hz > 0.0,
                "traffic.rate_hz: must be positive",
            );
            check(s.size > 0, "traffic.size: must be positive");
            check(
                s.rate_limit_hz.is_none_or(|r| r.is_finite() && r > 0.0),
                "traffic.rate_limit_hz: must be positive",
            );
            if matches!(self.access, AccessSpec::RandomAccess { .. }) {
                check(
                    s.size <= self.mtu_payload,
                    "traffic.size: random access carries single-packet updates only",
                );
            }
        }
        check(
            !self.channel.success.is_empty(),
            "channel.success: at least one probability is required",
        );
        check(
            self.channel.success.iter().all(|p| *p > 0.0 && *p <= 1.0),
            "channel.success: probabilities must lie in (0, 1]",
        );
        check(
            self.timing.poll_tx_us > 0,
            "timing.poll_tx_us: must be positive",
        );
        check(
            self.timing.turnaround_us > 0,
            "timing.turnaround_us: must be positive",
        );
        check(
            self.timing.rate_bps.is_finite() && self.timing.rate_bps > 0.0,
            "timing.rate_bps: must be positive",
        );
        check(
            self.mtu_payload > 0 && self.mtu_payload <= MAX_PAYLOAD,
            "mtu_payload: out of range",
        );
        match &self.access {
            AccessSpec::Polling {
                timeout_us,
                window_s,
                ..
            } => {
                check(
                    *timeout_us > self.timing.turnaround_us,
                    "access.timeout_us: must exceed the turnaround time",
                );
                check(
                    window_s.is_finite() && *window_s > 0.0,
                    "access.window_s: must be positive",
                );
            }
            AccessSpec::RandomAccess {
                q,
                max_backoff_stage,
                ..
            } => {
                check(*q > 0.0 && *q <= 1.0, "access.q: must lie in (0, 1]");
                check(
                    *max_backoff_stage <= 30,
                    "access.max_backoff_stage: at most 30",
                );
            }
        }
        if let QueueSpec::Fcfs { capacity, .. } = self.queue {
            check(capacity > 0, "queue.capacity: must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems })
        }
    }

    /// Canonical serialization used for hashing; independent of the key
    /// order in any source file and of the seed.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("sim config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SimConfig {
        SimConfig::saturated(
            4,
            1000.0,
            AccessSpec::polling(Policy::Mw),
            QueueSpec::Lcfs1,
            1.0,
        )
    }

    #[test]
    fn valid_base() {
        base().validate().unwrap();
        let mut ra = base();
        ra.access = AccessSpec::random_access();
        ra.validate().unwrap();
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut c = base();
        c.horizon_s = 0.0;
        c.channel.success = vec![0.0];
        c.traffic[0].rate_hz = -1.0;
        let err = c.validate().unwrap_err();
        assert_eq!(err.problems.len(), 3, "{err}");
        assert!(err.to_string().contains("horizon_s"));
    }

    #[test]
    fn hash_ignores_seed() {
        let a = base().with_seed(1);
        let b = base().with_seed(2);
        assert_eq!(a.config_hash(), b.config_hash());
        let mut c = base();
        c.n_sources = 5;
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn frame_airtime() {
        let t = TimingSpec::default();
        // (150 + 47) bytes at 12 Mb/s = 131.33 us
        assert_eq!(t.frame_tx(150), Micros(132));
        assert_eq!(t.frame_tx(0), Micros(32));
    }
}
