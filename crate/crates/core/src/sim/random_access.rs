//! Slotted contention model standing in for random access.
//!
//! This is a deliberately small abstraction, not 802.11 DCF. Time is divided
//! into slots long enough for one data frame plus an acknowledgement. In every
//! slot each backlogged instance attempts with probability `q / 2^stage`. Two
//! or more attempts collide and all fail; a lone attempt succeeds with the
//! sender's channel probability. Failures raise the backoff stage (capped),
//! success resets it, and the head update is discarded after `retry_limit`
//! consecutive failures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{AccessSpec, SimConfig};
use super::metrics::{InstanceMetrics, MetricsLog};
use super::polling::instances;
use super::rng::{stream, StreamName};
use super::traffic::TrafficSource;
use super::SimError;
use crate::aoi::{naoi, AgeTracker};
use crate::queueing::{QueueDiscipline, Update};
use crate::time::{Micros, Timestamp};

/// Contention state of one instance.
#[derive(Debug, Clone)]
pub struct Contender {
    pub backlogged: bool,
    pub stage: u32,
    /// Consecutive failed attempts of the current head update.
    pub failures: u32,
    /// Channel success probability of this contender's source.
    pub success: f64,
}

impl Contender {
    pub fn new(success: f64) -> Self {
        Contender {
            backlogged: false,
            stage: 0,
            failures: 0,
            success,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaParams {
    pub q: f64,
    pub max_backoff_stage: u32,
    pub retry_limit: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotOutcome {
    Idle,
    Success(usize),
    /// A lone attempt lost to the channel. `discard` when the retry limit hit.
    Lost {
        who: usize,
        discard: bool,
    },
    /// Every attempter and whether its head update hit the retry limit.
    Collision(Vec<(usize, bool)>),
}

fn fail(c: &mut Contender, params: RaParams) -> bool {
    c.stage = (c.stage + 1).min(params.max_backoff_stage);
    c.failures += 1;
    if c.failures > params.retry_limit {
        c.failures = 0;
        c.stage = 0;
        true
    } else {
        false
    }
}

/// Resolves one slot. `access[i]` drives contender `i`'s attempt decision and
/// `channel[i]` its loss draw, so each entity keeps its own random stream.
pub fn random_access_step<R: Rng>(
    contenders: &mut [Contender],
    params: RaParams,
    access: &mut [R],
    channel: &mut [R],
) -> SlotOutcome {
    let mut attempters = Vec::new();
    for (i, c) in contenders.iter().enumerate() {
        if !c.backlogged {
            continue;
        }
        let p = params.q / f64::from(1u32 << c.stage);
        if p >= 1.0 || access[i].random::<f64>() < p {
            attempters.push(i);
        }
    }
    match attempters.as_slice() {
        [] => SlotOutcome::Idle,
        [who] => {
            let who = *who;
            let c = &mut contenders[who];
            if c.success >= 1.0 || channel[who].random::<f64>() < c.success {
                c.stage = 0;
                c.failures = 0;
                SlotOutcome::Success(who)
            } else {
                SlotOutcome::Lost {
                    who,
                    discard: fail(c, params),
                }
            }
        }
        many => SlotOutcome::Collision(
            many.iter()
                .map(|&i| (i, fail(&mut contenders[i], params)))
                .collect(),
        ),
    }
}

pub fn run_random_access(cfg: &SimConfig) -> Result<MetricsLog, SimError> {
    let AccessSpec::RandomAccess {
        q,
        max_backoff_stage,
        retry_limit,
    } = cfg.access
    else {
        unreachable!("checked by caller")
    };
    let params = RaParams {
        q,
        max_backoff_stage,
        retry_limit,
    };
    let ids = instances(cfg);
    let timing = &cfg.timing;
    let slot = slot_length(cfg);

    let mut traffic: Vec<TrafficSource> = ids
        .iter()
        .zip(cfg.traffic.iter().cycle())
        .map(|(id, spec)| TrafficSource::new(*id, spec.clone(), cfg.seed))
        .collect();
    let mut queues: Vec<QueueDiscipline<Update>> = ids.iter().map(|_| cfg.queue.build()).collect();
    let mut contenders: Vec<Contender> = ids
        .iter()
        .map(|id| Contender::new(cfg.channel.success_for(usize::from(id.source))))
        .collect();
    let mut access: Vec<ChaCha8Rng> = ids
        .iter()
        .map(|id| stream(cfg.seed, StreamName::Access(*id)))
        .collect();
    let mut channels: Vec<ChaCha8Rng> = ids
        .iter()
        .map(|id| stream(cfg.seed, StreamName::Link(*id)))
        .collect();
    let mut trackers: Vec<AgeTracker> = ids
        .iter()
        .map(|_| AgeTracker::new(Timestamp::ZERO))
        .collect();
    let mut lost = vec![0u64; ids.len()];
    let mut delivered_bytes = vec![0u64; ids.len()];
    let mut in_air: Vec<Option<(Timestamp, Update)>> = vec![None; ids.len()];

    let horizon = Timestamp::from_secs_f64(cfg.horizon_s);
    let mut start = Timestamp::ZERO;
    while start < horizon {
        for (i, t) in traffic.iter_mut().enumerate() {
            let q = &mut queues[i];
            t.advance(start, |u| {
                q.push(u);
            });
            contenders[i].backlogged = !q.is_empty();
        }
        let outcome = random_access_step(&mut contenders, params, &mut access, &mut channels);
        let mut discard = |i: usize, queues: &mut [QueueDiscipline<Update>]| {
            queues[i].take();
            lost[i] += 1;
        };
        match outcome {
            SlotOutcome::Idle => {}
            SlotOutcome::Success(i) => {
                let update = queues[i]
                    .take()
                    .expect("backlogged contender has an update");
                let at = start + timing.turnaround() + timing.frame_tx(update.payload_size());
                in_air[i] = Some((at, update));
            }
            SlotOutcome::Lost { who, discard: d } => {
                if d {
                    discard(who, &mut queues);
                }
            }
            SlotOutcome::Collision(list) => {
                for (i, d) in list {
                    if d {
                        discard(i, &mut queues);
                    }
                }
            }
        }
        start += slot;
        for (i, air) in in_air.iter_mut().enumerate() {
            if let Some((at, update)) = air.take_if(|(at, _)| *at <= horizon.min(start)) {
                trackers[i].observe_delivery(update.gen_timestamp, at)?;
                delivered_bytes[i] += update.payload_size() as u64;
            }
        }
    }
    for (i, t) in traffic.iter_mut().enumerate() {
        let q = &mut queues[i];
        t.advance(horizon, |u| {
            q.push(u);
        });
    }

    let report = naoi(ids.iter().copied().zip(trackers.iter()), horizon)?;
    let metrics = ids
        .iter()
        .enumerate()
        .map(|(i, id)| InstanceMetrics {
            instance: *id,
            average_age_s: report.per_source_average[id],
            generated: traffic[i].generated(),
            deliveries: trackers[i].delivery_count() + trackers[i].stale_count(),
            delivered_bytes: delivered_bytes[i],
            drops: queues[i].stats().drops + traffic[i].limited() + lost[i],
            polls: 0,
            timeouts: 0,
            queued: queues[i].len() as u64,
            in_flight: u64::from(in_air[i].is_some()),
        })
        .collect();
    Ok(MetricsLog::assemble(cfg, report.naoi, metrics))
}

/// Duration of one contention slot for `cfg`.
pub fn slot_length(cfg: &SimConfig) -> Micros {
    let t = &cfg.timing;
    let largest = cfg.traffic.iter().map(|s| s.size).max().unwrap_or(0);
    t.turnaround() + t.frame_tx(largest) + t.turnaround() + t.poll_tx()
}
