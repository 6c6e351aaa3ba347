//! Age-of-Information sample paths.
//!
//! An [`AgeTracker`] follows `age(t) = t - τ(t)` for one instance, where `τ(t)`
//! is the generation time of the freshest update delivered so far. The path is
//! a sawtooth: slope one between fresh deliveries, dropping to the delivery
//! delay whenever a fresher update arrives. Stale deliveries leave it alone.
//!
//! The time integral is kept exactly, as twice the area in µs² (an integer),
//! so averages carry no quadrature error regardless of run length.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::instance::InstanceId;
use crate::time::{Micros, Timestamp};

/// Default tolerance for generation timestamps that lie in the future of the
/// receiver's clock (residual skew after synchronization).
pub const DEFAULT_SKEW_BOUND: Micros = Micros::from_millis(10);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AoiError {
    #[error("time went backwards: query at {now} precedes last update at {last}")]
    Monotonicity { now: Timestamp, last: Timestamp },
    #[error(
        "update generated at {gen} is {ahead_us} us in the future of {now}, beyond the skew bound"
    )]
    Causality {
        gen: Timestamp,
        now: Timestamp,
        ahead_us: u64,
    },
    #[error("averaging horizon must be strictly after the tracker origin")]
    EmptyHorizon,
    #[error("network age needs at least one tracker")]
    NoTrackers,
}

/// Whether a delivery moved the age path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Fresh,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeTracker {
    origin: Timestamp,
    last_fresh: Timestamp,
    last_update: Timestamp,
    doubled_integral: u128,
    delivery_count: u64,
    stale_count: u64,
    skew_clamped: u64,
    skew_bound: Micros,
}

impl AgeTracker {
    /// Starts a tracker with a virtual fresh delivery at `origin`, so the age
    /// is zero there.
    pub fn new(origin: Timestamp) -> Self {
        AgeTracker {
            origin,
            last_fresh: origin,
            last_update: origin,
            doubled_integral: 0,
            delivery_count: 0,
            stale_count: 0,
            skew_clamped: 0,
            skew_bound: DEFAULT_SKEW_BOUND,
        }
    }

    pub fn with_skew_bound(mut self, bound: Micros) -> Self {
        self.skew_bound = bound;
        self
    }

    pub fn origin(&self) -> Timestamp {
        self.origin
    }

    pub fn last_fresh_timestamp(&self) -> Timestamp {
        self.last_fresh
    }

    pub fn last_update_time(&self) -> Timestamp {
        self.last_update
    }

    /// Fresh deliveries only; stale ones are counted in [`Self::stale_count`].
    pub fn delivery_count(&self) -> u64 {
        self.delivery_count
    }

    pub fn stale_count(&self) -> u64 {
        self.stale_count
    }

    /// Deliveries whose timestamp was ahead of `now` but within the skew bound.
    pub fn skew_violations(&self) -> u64 {
        self.skew_clamped
    }

    fn check_time(&self, now: Timestamp) -> Result<(), AoiError> {
        if now < self.last_update {
            return Err(AoiError::Monotonicity {
                now,
                last: self.last_update,
            });
        }
        Ok(())
    }

    pub fn age_at_micros(&self, now: Timestamp) -> Result<Micros, AoiError> {
        self.check_time(now)?;
        Ok(now - self.last_fresh)
    }

    /// Age in seconds at `now`.
    pub fn age_at(&self, now: Timestamp) -> Result<f64, AoiError> {
        self.age_at_micros(now).map(Micros::as_secs_f64)
    }

    fn doubled_area(&self, to: Timestamp) -> u128 {
        let hi = u128::from((to - self.last_fresh).0);
        let lo = u128::from((self.last_update - self.last_fresh).0);
        hi * hi - lo * lo
    }

    /// Integrates the current sawtooth segment up to `now`.
    pub fn advance_to(&mut self, now: Timestamp) -> Result<(), AoiError> {
        self.check_time(now)?;
        self.doubled_integral += self.doubled_area(now);
        self.last_update = now;
        Ok(())
    }

    pub fn observe_delivery(
        &mut self,
        gen_timestamp: Timestamp,
        now: Timestamp,
    ) -> Result<Delivery, AoiError> {
        self.check_time(now)?;
        let gen = if gen_timestamp > now {
            let ahead = gen_timestamp - now;
            if ahead > self.skew_bound {
                return Err(AoiError::Causality {
                    gen: gen_timestamp,
                    now,
                    ahead_us: ahead.0,
                });
            }
            self.skew_clamped += 1;
            now
        } else {
            gen_timestamp
        };
        self.advance_to(now)?;
        if gen > self.last_fresh {
            self.last_fresh = gen;
            self.delivery_count += 1;
            Ok(Delivery::Fresh)
        } else {
            self.stale_count += 1;
            Ok(Delivery::Stale)
        }
    }

    /// ∫ age dt from the origin to `at`, in seconds². Does not mutate.
    pub fn integral_at(&self, at: Timestamp) -> Result<f64, AoiError> {
        self.check_time(at)?;
        let doubled = self.doubled_integral + self.doubled_area(at);
        Ok(doubled as f64 / 2.0e12)
    }

    /// Time-average age over `[origin, horizon]`, in seconds.
    pub fn time_average_age(&self, horizon: Timestamp) -> Result<f64, AoiError> {
        if horizon <= self.origin {
            return Err(AoiError::EmptyHorizon);
        }
        let integral = self.integral_at(horizon)?;
        Ok(integral / (horizon - self.origin).as_secs_f64())
    }
}

/// Per-instance and network-wide time-average age.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkAgeReport {
    pub per_source_average: BTreeMap<InstanceId, f64>,
    pub naoi: f64,
    pub horizon: f64,
}

/// Network age: the arithmetic mean of the per-instance time averages.
pub fn naoi<'a, I>(trackers: I, horizon: Timestamp) -> Result<NetworkAgeReport, AoiError>
where
    I: IntoIterator<Item = (InstanceId, &'a AgeTracker)>,
{
    let mut per_source_average = BTreeMap::new();
    for (id, tracker) in trackers {
        per_source_average.insert(id, tracker.time_average_age(horizon)?);
    }
    if per_source_average.is_empty() {
        return Err(AoiError::NoTrackers);
    }
    let naoi = per_source_average.values().sum::<f64>() / per_source_average.len() as f64;
    Ok(NetworkAgeReport {
        per_source_average,
        naoi,
        horizon: horizon.as_secs_f64(),
    })
}
