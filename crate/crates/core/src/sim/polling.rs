//! Polling access driven by the real protocol automata.
//!
//! The simulator owns time and the channel; everything else (queueing,
//! fragmentation, scheduling, estimation, age tracking) happens inside
//! [`SourceMachine`] and [`DestinationMachine`], exactly as in the UDP harness.
//!
//! Timeline of one exchange: the destination emits a poll at `t`; it is on
//! the air after one turnaround and fully received at
//! `t + turnaround + poll_tx`. The source answers after another turnaround;
//! the response lands after its airtime. A lost poll or response is noticed
//! when the timeout expires, measured from the end of the poll.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{AccessSpec, SimConfig};
use super::events::EventQueue;
use super::metrics::{InstanceMetrics, MetricsLog};
use super::rng::{stream, StreamName};
use super::traffic::TrafficSource;
use super::SimError;
use crate::instance::InstanceId;
use crate::protocol::{
    DestinationEvent, DestinationMachine, DestinationOptions, DestinationOutput, Packet,
    PacketKind, SourceEvent, SourceMachine, SourceOptions,
};
use crate::time::{Micros, Timestamp};

/// Inputs and outputs of the automata, in the order they were stepped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEntry {
    Declare {
        instance: InstanceId,
        now: Timestamp,
    },
    Start {
        now: Timestamp,
        output: DestinationOutput,
    },
    Source {
        instance: InstanceId,
        event: SourceEvent,
        output: Option<Packet>,
    },
    Destination {
        event: DestinationEvent,
        output: DestinationOutput,
    },
}

#[derive(Debug, Clone)]
enum Event {
    PollArrives(Packet),
    ResponseArrives(Packet),
    Timeout,
}

struct InstanceSim {
    source: usize,
    machine: SourceMachine,
    traffic: TrafficSource,
    lost_updates: u64,
    abandoned_seen: u64,
    /// Sequence number released by the source and not yet resolved.
    outstanding: Option<u32>,
}

pub(crate) fn destination_options(cfg: &SimConfig) -> DestinationOptions {
    let AccessSpec::Polling {
        policy,
        timeout_us,
        window_s,
    } = cfg.access
    else {
        unreachable!("polling options requested for a non-polling config")
    };
    DestinationOptions {
        policy,
        timeout: Micros(timeout_us),
        window: Micros::from_secs_f64(window_s),
        auto_register: false,
        ..DestinationOptions::default()
    }
}

pub(crate) fn source_options(cfg: &SimConfig) -> SourceOptions {
    SourceOptions {
        mtu_payload: cfg.mtu_payload,
        queue: cfg.queue,
        abandon_after: None,
    }
}

pub fn instances(cfg: &SimConfig) -> Vec<InstanceId> {
    (0..cfg.n_sources)
        .flat_map(|s| {
            cfg.traffic
                .iter()
                .map(move |t| InstanceId::new(s, t.info_type))
        })
        .collect()
}

struct Run<'a> {
    cfg: &'a SimConfig,
    queue: EventQueue<Event>,
    dest: DestinationMachine,
    sims: BTreeMap<InstanceId, InstanceSim>,
    channels: Vec<ChaCha8Rng>,
    trace: Option<Vec<TraceEntry>>,
    timeout: Micros,
}

impl Run<'_> {
    fn record(&mut self, entry: impl FnOnce() -> TraceEntry) {
        if let Some(t) = &mut self.trace {
            t.push(entry());
        }
    }

    fn channel_ok(&mut self, source: usize) -> bool {
        let p = self.cfg.channel.success_for(source);
        p >= 1.0 || self.channels[source].random::<f64>() < p
    }

    fn handle(&mut self, out: DestinationOutput, now: Timestamp) -> Result<(), SimError> {
        let Some(poll) = out.poll else {
            return Ok(());
        };
        let timing = &self.cfg.timing;
        let poll_end = now + timing.turnaround() + timing.poll_tx();
        let source = self.sims[&poll.instance()].source;
        if self.cfg.channel.poll_loss && !self.channel_ok(source) {
            self.queue
                .schedule(poll_end + self.timeout, 0, Event::Timeout)?;
        } else {
            self.queue.schedule(poll_end, 0, Event::PollArrives(poll))?;
        }
        Ok(())
    }

    fn advance_traffic(&mut self, id: InstanceId, until: Timestamp) {
        let trace = &mut self.trace;
        let sim = self.sims.get_mut(&id).expect("known instance");
        let machine = &mut sim.machine;
        sim.traffic.advance(until, |u| {
            let event = SourceEvent::UpdateGenerated(u);
            match trace {
                Some(t) => {
                    let output = machine.step(event.clone());
                    t.push(TraceEntry::Source {
                        instance: id,
                        event,
                        output,
                    });
                }
                None => {
                    machine.step(event);
                }
            }
        });
    }

    fn on_poll(&mut self, poll: Packet, now: Timestamp) -> Result<(), SimError> {
        let id = poll.instance();
        self.advance_traffic(id, now);
        let sim = self.sims.get_mut(&id).expect("known instance");
        let event = SourceEvent::PollReceived(poll);
        let response = match &self.trace {
            Some(_) => {
                let out = sim.machine.step(event.clone());
                self.trace
                    .as_mut()
                    .expect("tracing")
                    .push(TraceEntry::Source {
                        instance: id,
                        event,
                        output: out.clone(),
                    });
                out
            }
            None => sim.machine.step(event),
        };
        let response = response.ok_or(SimError::Protocol("source ignored a valid poll"))?;
        let sim = self.sims.get_mut(&id).expect("known instance");
        let abandoned = sim.machine.counters().abandoned_updates;
        if abandoned > sim.abandoned_seen {
            sim.abandoned_seen = abandoned;
            sim.outstanding = None;
        }
        if matches!(response.kind, PacketKind::Data | PacketKind::Frag) {
            sim.outstanding = Some(response.seq);
        }
        let source = sim.source;
        if self.channel_ok(source) {
            let timing = &self.cfg.timing;
            let arrival = now + timing.turnaround() + timing.frame_tx(response.payload.len());
            self.queue
                .schedule(arrival, 0, Event::ResponseArrives(response))?;
        } else {
            if response.kind == PacketKind::Data {
                let sim = self.sims.get_mut(&id).expect("known instance");
                sim.lost_updates += 1;
                sim.outstanding = None;
            }
            self.queue.schedule(now + self.timeout, 0, Event::Timeout)?;
        }
        Ok(())
    }

    fn step_destination(
        &mut self,
        event: DestinationEvent,
        now: Timestamp,
    ) -> Result<(), SimError> {
        let out = match &self.trace {
            Some(_) => {
                let out = self.dest.step(event.clone());
                self.trace
                    .as_mut()
                    .expect("tracing")
                    .push(TraceEntry::Destination {
                        event,
                        output: out.clone(),
                    });
                out
            }
            None => self.dest.step(event),
        };
        if let Some(d) = &out.delivery {
            if let Some(sim) = self.sims.get_mut(&d.instance) {
                if sim.outstanding == Some(d.seq) {
                    sim.outstanding = None;
                }
            }
        }
        self.handle(out, now)
    }
}

/// Runs a polling configuration. With `record`, also returns every automaton
/// step so the run can be replayed.
pub fn run_polling(
    cfg: &SimConfig,
    record: bool,
) -> Result<(MetricsLog, Option<Vec<TraceEntry>>), SimError> {
    let ids = instances(cfg);
    let dest = DestinationMachine::new(destination_options(cfg));
    let mut sims = BTreeMap::new();
    for (id, spec) in ids.iter().zip(cfg.traffic.iter().cycle()) {
        sims.insert(
            *id,
            InstanceSim {
                source: usize::from(id.source),
                machine: SourceMachine::new(*id, source_options(cfg)),
                traffic: TrafficSource::new(*id, spec.clone(), cfg.seed),
                lost_updates: 0,
                abandoned_seen: 0,
                outstanding: None,
            },
        );
    }
    let channels = (0..cfg.n_sources)
        .map(|s| stream(cfg.seed, StreamName::Channel(s)))
        .collect();
    let AccessSpec::Polling { timeout_us, .. } = cfg.access else {
        unreachable!("checked by caller")
    };
    let mut run = Run {
        cfg,
        queue: EventQueue::new(),
        dest,
        sims,
        channels,
        trace: record.then(Vec::new),
        timeout: Micros(timeout_us),
    };

    let t0 = Timestamp::ZERO;
    for id in &ids {
        run.dest.declare(*id, t0);
        run.record(|| TraceEntry::Declare {
            instance: *id,
            now: t0,
        });
    }
    let out = run.dest.start(t0);
    run.record(|| TraceEntry::Start {
        now: t0,
        output: out.clone(),
    });
    run.handle(out, t0)?;

    let horizon = Timestamp::from_secs_f64(cfg.horizon_s);
    while let Some(at) = run.queue.peek_time() {
        if at > horizon {
            break;
        }
        let (now, event) = run.queue.pop().expect("peeked");
        match event {
            Event::PollArrives(poll) => run.on_poll(poll, now)?,
            Event::ResponseArrives(packet) => {
                run.step_destination(DestinationEvent::Received { packet, now }, now)?
            }
            Event::Timeout => {
                run.step_destination(DestinationEvent::TimeoutExpired { now }, now)?
            }
        }
    }
    for id in &ids {
        run.advance_traffic(*id, horizon);
    }

    let report = run.dest.report(horizon)?;
    let mut metrics = Vec::with_capacity(ids.len());
    for id in &ids {
        let sim = &run.sims[id];
        let counters = run.dest.instance_counters(*id).unwrap_or_default();
        let sc = sim.machine.counters();
        let qs = sim.machine.queue_stats();
        metrics.push(InstanceMetrics {
            instance: *id,
            average_age_s: report.per_source_average[id],
            generated: sim.traffic.generated(),
            deliveries: counters.deliveries,
            delivered_bytes: counters.delivered_bytes,
            drops: qs.drops
                + sim.traffic.limited()
                + sim.lost_updates
                + sc.abandoned_updates
                + sc.rejected_updates,
            polls: counters.polls,
            timeouts: counters.timeouts,
            queued: sim.machine.queue().len() as u64,
            in_flight: u64::from(sim.outstanding.is_some()),
        });
    }
    Ok((MetricsLog::assemble(cfg, report.naoi, metrics), run.trace))
}

/// Feeds a recorded trace through fresh automata built from `cfg` and checks
/// that every step produces the recorded output. Returns the number of steps
/// replayed, or the index of the first divergence.
pub fn replay(cfg: &SimConfig, trace: &[TraceEntry]) -> Result<usize, usize> {
    let mut dest = DestinationMachine::new(destination_options(cfg));
    let mut sources: BTreeMap<InstanceId, SourceMachine> = instances(cfg)
        .into_iter()
        .map(|id| (id, SourceMachine::new(id, source_options(cfg))))
        .collect();
    for (i, entry) in trace.iter().enumerate() {
        let same = match entry {
            TraceEntry::Declare { instance, now } => {
                dest.declare(*instance, *now);
                true
            }
            TraceEntry::Start { now, output } => dest.start(*now) == *output,
            TraceEntry::Source {
                instance,
                event,
                output,
            } => match sources.get_mut(instance) {
                Some(m) => m.step(event.clone()) == *output,
                None => false,
            },
            TraceEntry::Destination { event, output } => dest.step(event.clone()) == *output,
        };
        if !same {
            return Err(i);
        }
    }
    Ok(trace.len())
}
