//! Integer-microsecond time base shared by every component.
//!
//! All clocks in the toolkit count microseconds since the start of a run.
//! Conversion to floating-point seconds only happens when reporting.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Microseconds per second.
pub const MICROS_PER_SEC: u64 = 1_000_000;

/// A point in time, in microseconds since the epoch of a run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        Timestamp(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Timestamp(s * MICROS_PER_SEC)
    }

    /// Rounds to the nearest microsecond. Negative input saturates to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp(round_micros(s))
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    /// Elapsed time from `earlier` to `self`, or `None` if `earlier` is later.
    pub fn checked_since(self, earlier: Timestamp) -> Option<Micros> {
        self.0.checked_sub(earlier.0).map(Micros)
    }

    pub fn saturating_since(self, earlier: Timestamp) -> Micros {
        Micros(self.0.saturating_sub(earlier.0))
    }

    pub fn saturating_sub(self, d: Micros) -> Timestamp {
        Timestamp(self.0.saturating_sub(d.0))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// A non-negative duration in microseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Micros(pub u64);

impl Micros {
    pub const ZERO: Micros = Micros(0);

    pub const fn from_millis(ms: u64) -> Self {
        Micros(ms * 1_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Micros(round_micros(s))
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn as_std(self) -> std::time::Duration {
        std::time::Duration::from_micros(self.0)
    }
}

impl Add<Micros> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: Micros) -> Timestamp {
        Timestamp(self.0 + rhs.0)
    }
}

impl AddAssign<Micros> for Timestamp {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 += rhs.0;
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0 + rhs.0)
    }
}

impl Sub for Timestamp {
    type Output = Micros;
    /// Panics on underflow in debug builds; use [`Timestamp::checked_since`]
    /// where ordering is not already guaranteed.
    fn sub(self, rhs: Timestamp) -> Micros {
        Micros(self.0 - rhs.0)
    }
}

/// Nearest microsecond, negatives clamp to zero. Adding a half and truncating
/// avoids the software `round` call on targets without SSE4.1.
fn round_micros(s: f64) -> u64 {
    let us = s * MICROS_PER_SEC as f64;
    if us > 0.0 {
        (us + 0.5) as u64
    } else {
        0
    }
}
