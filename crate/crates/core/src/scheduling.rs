//! Poll scheduling at the destination.
//!
//! Each instance carries a [`SourceEstimate`]: an age estimate, an estimate of
//! the system time of the source's head-of-line update, and a windowed channel
//! reliability estimate. Max-Weight polls the instance maximizing
//! `p̂ · (Δ̂ − Ĥ)²`; Maximum-Age-First looks at `Δ̂` only; round-robin cycles.
//! Ties always go to the least `(source, info_type)`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::InstanceId;
use crate::time::{Micros, Timestamp};

/// Reliability estimation window.
pub const DEFAULT_WINDOW: Micros = Micros::from_millis(500);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("no instances to choose from")]
    NoInstances,
    #[error("event at {at} for {instance} precedes the last logged event at {last}")]
    TimeRegression {
        instance: InstanceId,
        at: Timestamp,
        last: Timestamp,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkEvent {
    PollSent,
    DataReceived,
    EmptyReceived,
}

/// What arrived from a polled instance, as far as the estimators care.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    /// A complete update (or single-packet data) generated at the timestamp.
    Data(Timestamp),
    /// A non-final fragment of an update generated at the timestamp.
    Partial(Timestamp),
    Empty,
}

#[derive(Debug, Clone)]
pub struct SourceEstimate {
    id: InstanceId,
    // Δ̂(t) = t − freshest; kept as a timestamp so it grows for free.
    freshest: Timestamp,
    hol: Micros,
    window: Micros,
    log: VecDeque<(Timestamp, LinkEvent)>,
    polls: usize,
    receptions: usize,
    last_event: Timestamp,
}

impl SourceEstimate {
    /// A new estimate with zero age at `now` and an empty log.
    pub fn new(id: InstanceId, now: Timestamp) -> Self {
        Self::with_window(id, now, DEFAULT_WINDOW)
    }

    pub fn with_window(id: InstanceId, now: Timestamp, window: Micros) -> Self {
        SourceEstimate {
            id,
            freshest: now,
            hol: Micros::ZERO,
            window,
            log: VecDeque::new(),
            polls: 0,
            receptions: 0,
            last_event: now,
        }
    }

    pub fn id(&self) -> InstanceId {
        self.id
    }

    pub fn window(&self) -> Micros {
        self.window
    }

    pub fn age_estimate_micros(&self, now: Timestamp) -> Micros {
        now.saturating_since(self.freshest)
    }

    /// Δ̂ in seconds.
    pub fn age_estimate(&self, now: Timestamp) -> f64 {
        self.age_estimate_micros(now).as_secs_f64()
    }

    /// Ĥ in seconds.
    pub fn hol_estimate(&self) -> f64 {
        self.hol.as_secs_f64()
    }

    pub fn hol_estimate_micros(&self) -> Micros {
        self.hol
    }

    fn evict(&mut self, now: Timestamp) {
        let floor = now.saturating_sub(self.window);
        while let Some(&(at, kind)) = self.log.front() {
            if at >= floor {
                break;
            }
            self.log.pop_front();
            match kind {
                LinkEvent::PollSent => self.polls -= 1,
                _ => self.receptions -= 1,
            }
        }
    }

    pub fn reliability_record(
        &mut self,
        event: LinkEvent,
        now: Timestamp,
    ) -> Result<(), ScheduleError> {
        if now < self.last_event {
            return Err(ScheduleError::TimeRegression {
                instance: self.id,
                at: now,
                last: self.last_event,
            });
        }
        self.last_event = now;
        self.log.push_back((now, event));
        match event {
            LinkEvent::PollSent => self.polls += 1,
            _ => self.receptions += 1,
        }
        self.evict(now);
        Ok(())
    }

    /// (polls, receptions) logged within the window ending at `now`.
    pub fn window_counts(&mut self, now: Timestamp) -> (usize, usize) {
        self.evict(now);
        (self.polls, self.receptions)
    }

    /// p̂ = (𝒟 + 1)/(𝒫 + 1) over the window, capped at one.
    pub fn reliability_estimate(&mut self, now: Timestamp) -> f64 {
        let (polls, receptions) = self.window_counts(now);
        // A reception can outlive its poll in the window by up to one round trip.
        ((receptions + 1) as f64 / (polls + 1) as f64).min(1.0)
    }

    /// Read-only p̂ for callers that cannot evict; counts entries in the window.
    pub fn reliability_estimate_at(&self, now: Timestamp) -> f64 {
        let floor = now.saturating_sub(self.window);
        let (mut polls, mut receptions) = (0usize, 0usize);
        for &(at, kind) in self.log.iter().rev() {
            if at < floor {
                break;
            }
            match kind {
                LinkEvent::PollSent => polls += 1,
                _ => receptions += 1,
            }
        }
        ((receptions + 1) as f64 / (polls + 1) as f64).min(1.0)
    }

    /// Updates Δ̂ and Ĥ after something arrived from this instance.
    pub fn hol_on_reception(&mut self, reception: Reception, now: Timestamp) {
        match reception {
            Reception::Data(gen) => {
                let gen = gen.min(now);
                if gen > self.freshest {
                    self.freshest = gen;
                }
                self.hol = self.age_estimate_micros(now);
            }
            Reception::Partial(gen) => {
                // The rest of this update is still at the source; completing it
                // would drop the age to its system time.
                let system_time = now.saturating_since(gen.min(now));
                self.hol = system_time.min(self.age_estimate_micros(now));
            }
            Reception::Empty => {
                self.hol = self.age_estimate_micros(now);
            }
        }
    }

    /// Overrides the age estimate, e.g. when a destination re-registers an
    /// instance or a simulator knows the true value.
    pub fn set_freshest(&mut self, freshest: Timestamp) {
        self.freshest = freshest;
    }
}

/// `p · (age − hol)²`, with a negative gap clamped to zero.
pub fn mw_index(reliability: f64, age: f64, hol: f64) -> f64 {
    let gap = (age - hol).max(0.0);
    reliability * gap * gap
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[serde(alias = "max_weight")]
    Mw,
    #[serde(alias = "max_age_first")]
    Maf,
    #[serde(alias = "round_robin")]
    Rr,
}

impl Policy {
    pub fn label(self) -> &'static str {
        match self {
            Policy::Mw => "mw",
            Policy::Maf => "maf",
            Policy::Rr => "rr",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mw" | "max_weight" => Ok(Policy::Mw),
            "maf" | "max_age_first" => Ok(Policy::Maf),
            "rr" | "round_robin" => Ok(Policy::Rr),
            other => Err(format!("unknown policy `{other}` (expected mw, maf or rr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PollDecision {
    pub chosen: InstanceId,
    /// Index of every candidate, in the order the estimates were offered.
    pub index_values: Vec<(InstanceId, f64)>,
}

impl PollDecision {
    pub fn index_of(&self, id: InstanceId) -> Option<f64> {
        self.index_values
            .iter()
            .find(|(i, _)| *i == id)
            .map(|&(_, v)| v)
    }
}

/// Largest index; the least id wins ties whatever the input order.
fn argmax(values: &[(InstanceId, f64)]) -> Option<InstanceId> {
    let mut best: Option<(InstanceId, f64)> = None;
    for &(id, v) in values {
        match best {
            Some((bid, b)) if v < b || (v == b && id > bid) => {}
            _ => best = Some((id, v)),
        }
    }
    best.map(|(id, _)| id)
}

/// Max-Weight selection over refreshed estimates.
pub fn mw_select<'a, I>(estimates: I, now: Timestamp) -> Result<PollDecision, ScheduleError>
where
    I: IntoIterator<Item = &'a mut SourceEstimate>,
{
    let mut inconsistent = 0;
    mw_select_counting(estimates, now, &mut inconsistent)
}

fn mw_select_counting<'a, I>(
    estimates: I,
    now: Timestamp,
    inconsistent: &mut u64,
) -> Result<PollDecision, ScheduleError>
where
    I: IntoIterator<Item = &'a mut SourceEstimate>,
{
    let mut index_values = Vec::new();
    for est in estimates {
        let age = est.age_estimate(now);
        let hol = est.hol_estimate();
        if age < hol {
            *inconsistent += 1;
        }
        let p = est.reliability_estimate(now);
        index_values.push((est.id(), mw_index(p, age, hol)));
    }
    let chosen = argmax(&index_values).ok_or(ScheduleError::NoInstances)?;
    Ok(PollDecision {
        chosen,
        index_values,
    })
}

/// Maximum-Age-First: the largest Δ̂, ignoring p̂ and Ĥ.
pub fn maf_select<'a, I>(estimates: I, now: Timestamp) -> Result<PollDecision, ScheduleError>
where
    I: IntoIterator<Item = &'a SourceEstimate>,
{
    let index_values: Vec<_> = estimates
        .into_iter()
        .map(|e| (e.id(), e.age_estimate(now)))
        .collect();
    let chosen = argmax(&index_values).ok_or(ScheduleError::NoInstances)?;
    Ok(PollDecision {
        chosen,
        index_values,
    })
}

/// Stateful front end over the three policies.
#[derive(Debug, Clone)]
pub struct Scheduler {
    policy: Policy,
    last_rr: Option<InstanceId>,
    inconsistencies: u64,
}

impl Scheduler {
    pub fn new(policy: Policy) -> Self {
        Scheduler {
            policy,
            last_rr: None,
            inconsistencies: 0,
        }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Times Δ̂ < Ĥ was observed (clamped to a zero gap).
    pub fn inconsistency_count(&self) -> u64 {
        self.inconsistencies
    }

    pub fn select<'a, I>(
        &mut self,
        estimates: I,
        now: Timestamp,
    ) -> Result<PollDecision, ScheduleError>
    where
        I: IntoIterator<Item = &'a mut SourceEstimate>,
    {
        match self.policy {
            Policy::Mw => mw_select_counting(estimates, now, &mut self.inconsistencies),
            Policy::Maf => maf_select(estimates.into_iter().map(|e| &*e), now),
            Policy::Rr => {
                let ids: Vec<InstanceId> = estimates.into_iter().map(|e| e.id()).collect();
                let mut sorted = ids.clone();
                sorted.sort();
                let chosen = match self.last_rr {
                    Some(last) => sorted
                        .iter()
                        .copied()
                        .find(|&id| id > last)
                        .or_else(|| sorted.first().copied()),
                    None => sorted.first().copied(),
                }
                .ok_or(ScheduleError::NoInstances)?;
                self.last_rr = Some(chosen);
                let index_values = sorted
                    .into_iter()
                    .map(|id| (id, if id == chosen { 1.0 } else { 0.0 }))
                    .collect();
                Ok(PollDecision {
                    chosen,
                    index_values,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: u16) -> InstanceId {
        InstanceId::new(s, 0)
    }

    fn secs(x: f64) -> Timestamp {
        Timestamp::from_secs_f64(x)
    }

    /// Estimate at `now` with given age, hol (seconds) and an empty log.
    fn est(source: u16, now: Timestamp, age: f64, hol: f64) -> SourceEstimate {
        let mut e = SourceEstimate::new(id(source), Timestamp::ZERO);
        e.set_freshest(now.saturating_sub(Micros::from_secs_f64(age)));
        e.hol = Micros::from_secs_f64(hol);
        e.last_event = now;
        e
    }

    #[test]
    fn mw_index_examples() {
        assert_eq!(mw_index(1.0, 5.0, 2.0), 9.0);
        assert_eq!(mw_index(0.5, 4.0, 4.0), 0.0);
        let a = mw_index(0.3, 20.0, 0.0);
        let b = mw_index(0.9, 10.0, 0.0);
        assert!((a - 120.0).abs() < 1e-9 && (b - 90.0).abs() < 1e-9 && a > b);
        assert_eq!(mw_index(1.0, 1.0, 3.0), 0.0);
    }

    #[test]
    fn mw_prefers_weighted_reduction() {
        let now = secs(100.0);
        let mut a = est(0, now, 10.0, 0.0);
        let mut b = est(1, now, 20.0, 0.0);
        // p̂ = 0.3 for b: 6 receptions of 20 polls ... use 9 polls, 2 receptions => 0.3
        for _ in 0..9 {
            b.reliability_record(LinkEvent::PollSent, now).unwrap();
        }
        for _ in 0..2 {
            b.reliability_record(LinkEvent::DataReceived, now).unwrap();
        }
        for _ in 0..9 {
            a.reliability_record(LinkEvent::PollSent, now).unwrap();
        }
        for _ in 0..8 {
            a.reliability_record(LinkEvent::DataReceived, now).unwrap();
        }
        let d = mw_select([&mut a, &mut b], now).unwrap();
        assert_eq!(d.chosen, id(1));
        assert!((d.index_of(id(1)).unwrap() - 120.0).abs() < 1e-6);
        assert!((d.index_of(id(0)).unwrap() - 90.0).abs() < 1e-6);
    }

    #[test]
    fn ties_go_to_least_id() {
        let now = secs(5.0);
        let mut es: Vec<_> = (0..4).rev().map(|s| est(s, now, 3.0, 1.0)).collect();
        assert_eq!(mw_select(es.iter_mut(), now).unwrap().chosen, id(0));
        assert_eq!(maf_select(es.iter(), now).unwrap().chosen, id(0));
    }

    #[test]
    fn maf_examples() {
        let now = secs(50.0);
        let es = [
            est(0, now, 3.0, 0.0),
            est(1, now, 7.0, 0.0),
            est(2, now, 5.0, 0.0),
        ];
        assert_eq!(maf_select(es.iter(), now).unwrap().chosen, id(1));
        let es = [
            est(0, now, 7.0, 0.0),
            est(1, now, 3.0, 0.0),
            est(2, now, 7.0, 0.0),
        ];
        assert_eq!(maf_select(es.iter(), now).unwrap().chosen, id(0));

        let mut lossy = est(0, now, 10.0, 0.0);
        for _ in 0..99 {
            lossy.reliability_record(LinkEvent::PollSent, now).unwrap();
        }
        assert!((lossy.reliability_estimate(now) - 0.01).abs() < 1e-12);
        let es = [lossy, est(1, now, 9.0, 0.0)];
        assert_eq!(maf_select(es.iter(), now).unwrap().chosen, id(0));
    }

    #[test]
    fn empty_sets_are_errors() {
        assert_eq!(
            mw_select(std::iter::empty(), Timestamp::ZERO),
            Err(ScheduleError::NoInstances)
        );
        assert_eq!(
            maf_select(std::iter::empty(), Timestamp::ZERO),
            Err(ScheduleError::NoInstances)
        );
        let mut rr = Scheduler::new(Policy::Rr);
        assert!(rr.select(std::iter::empty(), Timestamp::ZERO).is_err());
    }

    #[test]
    fn reliability_counts_and_window() {
        let mut e = SourceEstimate::new(id(0), Timestamp::ZERO);
        assert_eq!(e.reliability_estimate(Timestamp::ZERO), 1.0);
        for _ in 0..3 {
            e.reliability_record(LinkEvent::PollSent, secs(0.1))
                .unwrap();
        }
        e.reliability_record(LinkEvent::DataReceived, secs(0.1))
            .unwrap();
        assert_eq!(e.window_counts(secs(0.1)), (3, 1));
        assert_eq!(e.reliability_estimate_at(secs(0.1)), 0.5);
        // entries at 0.1 fall out of a 0.5 s window by 0.7
        assert_eq!(e.window_counts(secs(0.7)), (0, 0));
        assert_eq!(e.reliability_estimate(secs(0.7)), 1.0);
    }

    #[test]
    fn empty_counts_as_reception() {
        let mut e = SourceEstimate::new(id(0), Timestamp::ZERO);
        for _ in 0..9 {
            e.reliability_record(LinkEvent::PollSent, secs(1.0))
                .unwrap();
        }
        for _ in 0..2 {
            e.reliability_record(LinkEvent::DataReceived, secs(1.0))
                .unwrap();
        }
        for _ in 0..2 {
            e.reliability_record(LinkEvent::EmptyReceived, secs(1.0))
                .unwrap();
        }
        assert_eq!(e.reliability_estimate(secs(1.0)), 0.5);
    }

    #[test]
    fn reliability_rejects_time_regression() {
        let mut e = SourceEstimate::new(id(0), Timestamp::ZERO);
        e.reliability_record(LinkEvent::PollSent, secs(2.0))
            .unwrap();
        assert!(matches!(
            e.reliability_record(LinkEvent::DataReceived, secs(1.0)),
            Err(ScheduleError::TimeRegression { .. })
        ));
    }

    #[test]
    fn hol_rules() {
        let mut e = SourceEstimate::new(id(0), Timestamp::ZERO);
        let now = secs(10.0);
        e.hol_on_reception(Reception::Data(secs(9.0)), now);
        assert_eq!(e.age_estimate(now), 1.0);
        assert_eq!(e.hol_estimate(), 1.0);

        // no reception for 2 s: Ĥ frozen, Δ̂ grows
        let later = secs(12.0);
        assert_eq!(e.hol_estimate(), 1.0);
        assert_eq!(e.age_estimate(later), 3.0);
        assert_eq!(mw_index(1.0, e.age_estimate(later), e.hol_estimate()), 4.0);

        // empty at Δ̂ = 4
        let t = secs(13.0);
        e.hol_on_reception(Reception::Empty, t);
        assert_eq!(e.age_estimate(t), 4.0);
        assert_eq!(e.hol_estimate(), 4.0);
        assert_eq!(mw_index(1.0, e.age_estimate(t), e.hol_estimate()), 0.0);
        assert!(mw_index(1.0, e.age_estimate(secs(13.5)), e.hol_estimate()) > 0.0);
    }

    #[test]
    fn partial_fragment_keeps_potential_reduction() {
        let mut e = SourceEstimate::new(id(0), Timestamp::ZERO);
        let now = secs(5.0);
        e.hol_on_reception(Reception::Partial(secs(4.5)), now);
        assert_eq!(e.age_estimate(now), 5.0);
        assert_eq!(e.hol_estimate(), 0.5);
    }

    #[test]
    fn round_robin_cycles() {
        let now = secs(1.0);
        let mut es: Vec<_> = [2u16, 0, 1]
            .iter()
            .map(|&s| est(s, now, 1.0, 0.0))
            .collect();
        let mut rr = Scheduler::new(Policy::Rr);
        let picks: Vec<_> = (0..5)
            .map(|_| rr.select(es.iter_mut(), now).unwrap().chosen.source)
            .collect();
        assert_eq!(picks, vec![0, 1, 2, 0, 1]);
    }

    #[test]
    fn inconsistency_is_counted_not_raised() {
        let now = secs(3.0);
        let mut e = est(0, now, 1.0, 2.0);
        let mut s = Scheduler::new(Policy::Mw);
        let d = s.select([&mut e], now).unwrap();
        assert_eq!(d.index_of(id(0)), Some(0.0));
        assert_eq!(s.inconsistency_count(), 1);
    }

    #[test]
    fn policy_parses() {
        assert_eq!("mw".parse::<Policy>().unwrap(), Policy::Mw);
        assert_eq!("max_age_first".parse::<Policy>().unwrap(), Policy::Maf);
        assert!("fifo".parse::<Policy>().is_err());
    }
}
