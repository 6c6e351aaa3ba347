//! Synthetic sensors producing checksummed payloads on a fixed schedule.

use std::str::FromStr;

use bytes::Bytes;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::instance::InstanceId;
use crate::sim::rng::{stream, StreamName};
use crate::time::Micros;

/// Trailing digest length appended to every payload.
pub const DIGEST_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorProfile {
    /// 50 B at 1 Hz.
    Gps,
    /// 20 B at 100 Hz.
    Imu,
    /// 19000 B at 2 Hz.
    Camera,
}

impl SensorProfile {
    pub const ALL: [SensorProfile; 3] = [
        SensorProfile::Gps,
        SensorProfile::Imu,
        SensorProfile::Camera,
    ];

    pub fn info_type(self) -> u8 {
        match self {
            SensorProfile::Gps => 0,
            SensorProfile::Imu => 1,
            SensorProfile::Camera => 2,
        }
    }

    pub fn from_info_type(t: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.info_type() == t)
    }

    pub fn size(self) -> usize {
        match self {
            SensorProfile::Gps => 50,
            SensorProfile::Imu => 20,
            SensorProfile::Camera => 19_000,
        }
    }

    pub fn rate_hz(self) -> f64 {
        match self {
            SensorProfile::Gps => 1.0,
            SensorProfile::Imu => 100.0,
            SensorProfile::Camera => 2.0,
        }
    }

    pub fn period(self) -> Micros {
        Micros::from_secs_f64(1.0 / self.rate_hz())
    }

    pub fn label(self) -> &'static str {
        match self {
            SensorProfile::Gps => "gps",
            SensorProfile::Imu => "imu",
            SensorProfile::Camera => "camera",
        }
    }
}

impl FromStr for SensorProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| format!("unknown profile `{s}` (expected gps, imu or camera)"))
    }
}

/// Random body followed by the first bytes of its SHA-256.
pub fn make_payload(rng: &mut impl RngCore, size: usize) -> Bytes {
    assert!(size > DIGEST_LEN, "payload must exceed the digest length");
    let mut buf = vec![0u8; size];
    let (body, tail) = buf.split_at_mut(size - DIGEST_LEN);
    rng.fill_bytes(body);
    tail.copy_from_slice(&Sha256::digest(&*body)[..DIGEST_LEN]);
    Bytes::from(buf)
}

/// Whether the trailing digest matches the body.
pub fn verify_payload(payload: &[u8]) -> bool {
    if payload.len() <= DIGEST_LEN {
        return false;
    }
    let (body, tail) = payload.split_at(payload.len() - DIGEST_LEN);
    Sha256::digest(body)[..DIGEST_LEN] == *tail
}

/// Deterministic generation schedule for one sensor. Gaps are the nominal
/// period scaled by a uniform factor in `[1 − jitter, 1 + jitter]`.
#[derive(Debug, Clone)]
pub struct SensorEmulator {
    profile: SensorProfile,
    jitter: f64,
    rng: ChaCha8Rng,
}

impl SensorEmulator {
    pub fn new(instance: InstanceId, profile: SensorProfile, jitter: f64, seed: u64) -> Self {
        SensorEmulator {
            profile,
            jitter,
            rng: stream(seed, StreamName::Traffic(instance)),
        }
    }

    pub fn profile(&self) -> SensorProfile {
        self.profile
    }

    /// Time from this update to the next.
    pub fn next_gap(&mut self) -> Micros {
        let nominal = 1.0 / self.profile.rate_hz();
        let factor = if self.jitter > 0.0 {
            1.0 + self.rng.random_range(-self.jitter..=self.jitter)
        } else {
            1.0
        };
        Micros::from_secs_f64(nominal * factor)
    }

    pub fn next_payload(&mut self) -> Bytes {
        make_payload(&mut self.rng, self.profile.size())
    }
}
