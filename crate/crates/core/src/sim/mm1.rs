//! Closed-form M/M/1 age oracles and the brute-force simulations that
//! validate them.
//!
//! FCFS uses the classic expression for an M/M/1 queue with an infinite
//! buffer. The LCFS oracle is the M/M/1/2* system: one packet in service,
//! one waiting slot that a fresher arrival overwrites. That is what a
//! single-slot head-drop queue in front of a non-preemptive server does, and
//! it is the model the brute-force check runs against.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rng::{stream, StreamName};
use crate::aoi::{AgeTracker, AoiError};
use crate::queueing::Lcfs1Queue;
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    Fcfs,
    Lcfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OracleError {
    #[error("rates must be positive and finite (lambda {lambda}, mu {mu})")]
    BadRate { lambda: f64, mu: f64 },
    #[error("FCFS queue is unstable at rho = {rho}")]
    Unstable { rho: f64 },
}

/// Time-average age in seconds.
pub fn mm1_age_oracle(lambda: f64, mu: f64, discipline: Discipline) -> Result<f64, OracleError> {
    if !(lambda.is_finite() && mu.is_finite() && lambda > 0.0 && mu > 0.0) {
        return Err(OracleError::BadRate { lambda, mu });
    }
    let rho = lambda / mu;
    match discipline {
        Discipline::Fcfs => {
            if rho >= 1.0 {
                return Err(OracleError::Unstable { rho });
            }
            Ok((1.0 + 1.0 / rho + rho * rho / (1.0 - rho)) / mu)
        }
        Discipline::Lcfs => {
            let r = rho;
            let num =
                2.0 * r.powi(5) + 7.0 * r.powi(4) + 8.0 * r.powi(3) + 7.0 * r * r + 4.0 * r + 1.0;
            let den = mu * r * (r + 1.0).powi(2) * (r * r + r + 1.0);
            Ok(num / den)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mm1Run {
    pub average_age: f64,
    pub deliveries: u64,
}

#[derive(Debug, Error)]
pub enum Mm1Error {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Aoi(#[from] AoiError),
}

/// Arrival and service-clock draws on separate streams. Arrivals are unit
/// exponentials scaled by `1/λ`, so runs at different loads are paired too.
struct Draws {
    arrivals: ChaCha8Rng,
    services: ChaCha8Rng,
    lambda: f64,
    mu: f64,
}

impl Draws {
    fn new(seed: u64, lambda: f64, mu: f64) -> Self {
        Draws {
            arrivals: stream(seed, StreamName::Other(0)),
            services: stream(seed, StreamName::Other(1)),
            lambda,
            mu,
        }
    }

    fn interarrival(&mut self) -> f64 {
        let e: f64 = Exp1.sample(&mut self.arrivals);
        e / self.lambda
    }

    fn service(&mut self) -> f64 {
        let e: f64 = Exp1.sample(&mut self.services);
        e / self.mu
    }
}

fn ts(s: f64) -> Timestamp {
    Timestamp::from_secs_f64(s)
}

/// Discrete-event M/M/1 run over `[0, deliveries / λ]`, the time in which
/// `deliveries` packets are expected to arrive. Ages are measured by an
/// [`AgeTracker`] over that window.
///
/// Service is driven by a rate-μ Poisson clock: every tick completes the
/// packet in service, ticks on an idle server are wasted. With exponential
/// service this is exactly M/M/1, and because FCFS and LCFS runs with the same
/// seed share arrivals and ticks, LCFS has delivered something at least as
/// fresh as FCFS at every instant of the shared sample path.
pub fn simulate_mm1(
    lambda: f64,
    mu: f64,
    discipline: Discipline,
    deliveries: u64,
    seed: u64,
) -> Result<Mm1Run, Mm1Error> {
    if !(lambda.is_finite() && mu.is_finite() && lambda > 0.0 && mu > 0.0) {
        return Err(OracleError::BadRate { lambda, mu }.into());
    }
    if discipline == Discipline::Fcfs && lambda >= mu {
        return Err(OracleError::Unstable { rho: lambda / mu }.into());
    }
    let mut draws = Draws::new(seed, lambda, mu);
    let mut tracker = AgeTracker::new(Timestamp::ZERO);
    let mut fcfs: VecDeque<f64> = VecDeque::new();
    let mut in_service: Option<f64> = None;
    let mut waiting = Lcfs1Queue::new();
    let mut arrival = draws.interarrival();
    let mut tick = draws.service();
    let mut done = 0;
    let horizon = deliveries as f64 / lambda;
    while arrival.min(tick) <= horizon {
        if arrival <= tick {
            match discipline {
                Discipline::Fcfs => fcfs.push_back(arrival),
                Discipline::Lcfs if in_service.is_none() => in_service = Some(arrival),
                Discipline::Lcfs => {
                    waiting.push(ts(arrival));
                }
            }
            arrival += draws.interarrival();
            continue;
        }
        let now = tick;
        tick += draws.service();
        let served = match discipline {
            Discipline::Fcfs => fcfs.pop_front(),
            Discipline::Lcfs => {
                let served = in_service.take();
                if served.is_some() {
                    in_service = waiting.take().map(Timestamp::as_secs_f64);
                }
                served
            }
        };
        if let Some(gen) = served {
            tracker.observe_delivery(ts(gen), ts(now))?;
            done += 1;
        }
    }
    Ok(Mm1Run {
        average_age: tracker.time_average_age(ts(horizon))?,
        deliveries: done,
    })
}

/// Deliveries per point for a relative standard error well under 1% up to
/// ρ = 0.9, where FCFS age correlations stretch out.
/// The 3% margin keeps the realized count of a stable queue above 10^6.
pub fn deliveries_for(rho: f64) -> u64 {
    let tail = 2.0e5 / (1.0 - rho.min(0.95)).powi(2);
    (tail.max(1.0e6) * 1.03) as u64
}

/// ρ ∈ {0.10, 0.15, …, 0.90}.
pub fn rho_grid() -> Vec<f64> {
    (0..17).map(|k| 0.10 + 0.05 * f64::from(k)).collect()
}

/// One row of an M/M/1 curve at μ = 1; also the CSV schema of `freshnet mm1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mm1Point {
    pub rho: f64,
    pub discipline: Discipline,
    pub oracle_s: f64,
    pub simulated_s: f64,
    pub deliveries: u64,
}

/// Both disciplines at every ρ of `grid`, μ = 1. Every point reuses `seed`,
/// so FCFS and LCFS at one ρ see the same arrivals and service ticks.
pub fn mm1_sweep(grid: &[f64], seed: u64) -> Result<Vec<Mm1Point>, Mm1Error> {
    use rayon::prelude::*;
    let jobs: Vec<(f64, Discipline)> = grid
        .iter()
        .flat_map(|&r| [(r, Discipline::Fcfs), (r, Discipline::Lcfs)])
        .collect();
    jobs.par_iter()
        .map(|&(rho, discipline)| {
            let run = simulate_mm1(rho, 1.0, discipline, deliveries_for(rho), seed)?;
            Ok(Mm1Point {
                rho,
                discipline,
                oracle_s: mm1_age_oracle(rho, 1.0, discipline)?,
                simulated_s: run.average_age,
                deliveries: run.deliveries,
            })
        })
        .collect()
}

/// Replays an exogenous service-opportunity trace through a queue: at each
/// opportunity the queue hands over one update (if any) which is delivered
/// instantly. Returns the age just after every arrival and opportunity.
pub fn age_path(
    arrivals: &[Timestamp],
    opportunities: &[Timestamp],
    mut push: impl FnMut(Timestamp),
    mut take: impl FnMut() -> Option<Timestamp>,
) -> Result<Vec<(Timestamp, u64)>, AoiError> {
    let mut tracker = AgeTracker::new(Timestamp::ZERO);
    let mut path = Vec::with_capacity(arrivals.len() + opportunities.len());
    let (mut a, mut o) = (0, 0);
    while a < arrivals.len() || o < opportunities.len() {
        // arrivals first on ties: an update generated at an opportunity can be served by it
        let arrival_next =
            o >= opportunities.len() || (a < arrivals.len() && arrivals[a] <= opportunities[o]);
        let now = if arrival_next {
            push(arrivals[a]);
            a += 1;
            arrivals[a - 1]
        } else {
            let now = opportunities[o];
            o += 1;
            if let Some(gen) = take() {
                tracker.observe_delivery(gen, now)?;
            } else {
                tracker.advance_to(now)?;
            }
            now
        };
        path.push((now, tracker.age_at_micros(now)?.0));
    }
    Ok(path)
}
