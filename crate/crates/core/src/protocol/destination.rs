//! Destination-side automaton: polls one instance at a time, estimates the
//! network state from what comes back, and tracks the true age of every
//! instance from completed updates.
//!
//! The automaton is clock-free. Callers feed it `(event, now)` pairs and arm a
//! timer for the returned deadline; a response to the outstanding poll or an
//! expired timer both trigger the next scheduling decision. Packets that do
//! not answer the outstanding poll are still absorbed (registration, late
//! data) but never cause a second poll to be in flight.

use std::collections::BTreeMap;

use bytes::Bytes;

use super::fragment::{Assembled, Reassembler};
use super::wire::{FragAck, Packet, PacketKind};
use crate::aoi::{self, AgeTracker, AoiError, NetworkAgeReport, DEFAULT_SKEW_BOUND};
use crate::instance::InstanceId;
use crate::scheduling::{LinkEvent, Policy, Reception, Scheduler, SourceEstimate, DEFAULT_WINDOW};
use crate::time::{Micros, Timestamp};

/// Application-layer response timeout.
pub const APP_TIMEOUT: Micros = Micros::from_millis(300);
/// MAC-layer response timeout.
pub const RT_TIMEOUT: Micros = Micros(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DestinationOptions {
    pub policy: Policy,
    pub timeout: Micros,
    pub window: Micros,
    pub skew_bound: Micros,
    /// Register unknown instances on their first packet.
    pub auto_register: bool,
}

impl Default for DestinationOptions {
    fn default() -> Self {
        DestinationOptions {
            policy: Policy::Mw,
            timeout: APP_TIMEOUT,
            window: DEFAULT_WINDOW,
            skew_bound: DEFAULT_SKEW_BOUND,
            auto_register: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DestinationState {
    /// Nothing registered yet, so nothing to poll.
    Idle,
    AwaitData {
        polled: InstanceId,
        since: Timestamp,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DestinationEvent {
    Received { packet: Packet, now: Timestamp },
    TimeoutExpired { now: Timestamp },
}

/// A completely received update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub instance: InstanceId,
    pub seq: u32,
    pub gen_timestamp: Timestamp,
    pub received_at: Timestamp,
    pub payload: Bytes,
    /// Whether it lowered the age (as opposed to a stale delivery).
    pub fresh: bool,
}

/// What the caller must do after a step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DestinationOutput {
    pub poll: Option<Packet>,
    /// Fire `TimeoutExpired` at this time unless a response arrives first.
    pub deadline: Option<Timestamp>,
    pub delivery: Option<Delivery>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InstanceCounters {
    pub polls: u64,
    pub timeouts: u64,
    pub data_packets: u64,
    pub empties: u64,
    pub deliveries: u64,
    pub delivered_bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DestinationCounters {
    pub polls: u64,
    pub timeouts: u64,
    pub stray_packets: u64,
    pub ignored_packets: u64,
    pub causality_errors: u64,
}

#[derive(Debug, Clone)]
struct InstanceState {
    estimate: SourceEstimate,
    tracker: AgeTracker,
    reassembler: Reassembler,
    last_ack: Option<FragAck>,
    counters: InstanceCounters,
}

#[derive(Debug, Clone)]
pub struct DestinationMachine {
    options: DestinationOptions,
    scheduler: Scheduler,
    state: DestinationState,
    instances: BTreeMap<InstanceId, InstanceState>,
    counters: DestinationCounters,
}

impl DestinationMachine {
    pub fn new(options: DestinationOptions) -> Self {
        DestinationMachine {
            options,
            scheduler: Scheduler::new(options.policy),
            state: DestinationState::Idle,
            instances: BTreeMap::new(),
            counters: DestinationCounters::default(),
        }
    }

    pub fn options(&self) -> &DestinationOptions {
        &self.options
    }

    pub fn state(&self) -> DestinationState {
        self.state
    }

    pub fn counters(&self) -> DestinationCounters {
        self.counters
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn instances(&self) -> impl Iterator<Item = InstanceId> + '_ {
        self.instances.keys().copied()
    }

    pub fn instance_counters(&self, id: InstanceId) -> Option<InstanceCounters> {
        self.instances.get(&id).map(|s| s.counters)
    }

    pub fn tracker(&self, id: InstanceId) -> Option<&AgeTracker> {
        self.instances.get(&id).map(|s| &s.tracker)
    }

    pub fn estimate(&self, id: InstanceId) -> Option<&SourceEstimate> {
        self.instances.get(&id).map(|s| &s.estimate)
    }

    pub fn estimate_mut(&mut self, id: InstanceId) -> Option<&mut SourceEstimate> {
        self.instances.get_mut(&id).map(|s| &mut s.estimate)
    }

    /// Declares an instance whose age starts at zero at `now`. If the
    /// destination was idle this starts the polling loop.
    pub fn register(&mut self, id: InstanceId, now: Timestamp) -> DestinationOutput {
        self.declare(id, now);
        self.start(now)
    }

    /// Declares an instance without polling anything.
    pub fn declare(&mut self, id: InstanceId, now: Timestamp) {
        self.ensure_instance(id, now);
    }

    /// Emits the first poll if the destination is idle and knows of at least
    /// one instance.
    pub fn start(&mut self, now: Timestamp) -> DestinationOutput {
        if self.state == DestinationState::Idle {
            return self.poll_next(now);
        }
        DestinationOutput::default()
    }

    fn ensure_instance(&mut self, id: InstanceId, now: Timestamp) -> &mut InstanceState {
        let opts = self.options;
        self.instances.entry(id).or_insert_with(|| InstanceState {
            estimate: SourceEstimate::with_window(id, now, opts.window),
            tracker: AgeTracker::new(now).with_skew_bound(opts.skew_bound),
            reassembler: Reassembler::new(),
            last_ack: None,
            counters: InstanceCounters::default(),
        })
    }

    pub fn step(&mut self, event: DestinationEvent) -> DestinationOutput {
        match event {
            DestinationEvent::Received { packet, now } => self.on_packet(packet, now),
            DestinationEvent::TimeoutExpired { now } => match self.state {
                DestinationState::AwaitData { polled, .. } => {
                    self.counters.timeouts += 1;
                    if let Some(s) = self.instances.get_mut(&polled) {
                        s.counters.timeouts += 1;
                    }
                    self.poll_next(now)
                }
                DestinationState::Idle => DestinationOutput::default(),
            },
        }
    }

    fn on_packet(&mut self, packet: Packet, now: Timestamp) -> DestinationOutput {
        if !matches!(
            packet.kind,
            PacketKind::Data | PacketKind::Frag | PacketKind::Empty
        ) {
            self.counters.ignored_packets += 1;
            return DestinationOutput::default();
        }
        let id = packet.instance();
        if !self.instances.contains_key(&id) && !self.options.auto_register {
            self.counters.ignored_packets += 1;
            return DestinationOutput::default();
        }
        let answers_poll =
            matches!(self.state, DestinationState::AwaitData { polled, .. } if polled == id);
        let was_idle = self.state == DestinationState::Idle;

        let mut delivery = None;
        let mut causality_error = false;
        let state = self.ensure_instance(id, now);
        let _ = state.estimate.reliability_record(
            if packet.kind == PacketKind::Empty {
                LinkEvent::EmptyReceived
            } else {
                LinkEvent::DataReceived
            },
            now,
        );
        match packet.kind {
            PacketKind::Empty => {
                state.counters.empties += 1;
                state.estimate.hol_on_reception(Reception::Empty, now);
            }
            _ => {
                state.counters.data_packets += 1;
                let outcome = state.reassembler.accept(&packet);
                if !matches!(outcome, Assembled::Stale) {
                    state.last_ack = packet.as_ack();
                }
                match outcome {
                    Assembled::Pending { .. } => {
                        state
                            .estimate
                            .hol_on_reception(Reception::Partial(packet.gen_timestamp), now);
                    }
                    Assembled::Complete {
                        seq,
                        gen_timestamp,
                        payload,
                    } => {
                        state
                            .estimate
                            .hol_on_reception(Reception::Data(gen_timestamp), now);
                        match state.tracker.observe_delivery(gen_timestamp, now) {
                            Ok(d) => {
                                state.counters.deliveries += 1;
                                state.counters.delivered_bytes += payload.len() as u64;
                                delivery = Some(Delivery {
                                    instance: id,
                                    seq,
                                    gen_timestamp,
                                    received_at: now,
                                    payload,
                                    fresh: d == aoi::Delivery::Fresh,
                                });
                            }
                            Err(AoiError::Causality { .. }) => causality_error = true,
                            Err(_) => {}
                        }
                    }
                    Assembled::Duplicate | Assembled::Stale => {
                        state
                            .estimate
                            .hol_on_reception(Reception::Data(packet.gen_timestamp), now);
                    }
                }
            }
        }
        if causality_error {
            self.counters.causality_errors += 1;
        }

        let mut out = if answers_poll || was_idle {
            self.poll_next(now)
        } else {
            self.counters.stray_packets += 1;
            DestinationOutput::default()
        };
        out.delivery = delivery;
        out
    }

    fn poll_next(&mut self, now: Timestamp) -> DestinationOutput {
        let decision = match self
            .scheduler
            .select(self.instances.values_mut().map(|s| &mut s.estimate), now)
        {
            Ok(d) => d,
            Err(_) => {
                self.state = DestinationState::Idle;
                return DestinationOutput::default();
            }
        };
        let state = self
            .instances
            .get_mut(&decision.chosen)
            .expect("chosen instance exists");
        let _ = state.estimate.reliability_record(LinkEvent::PollSent, now);
        state.counters.polls += 1;
        self.counters.polls += 1;
        self.state = DestinationState::AwaitData {
            polled: decision.chosen,
            since: now,
        };
        DestinationOutput {
            poll: Some(Packet::poll(decision.chosen, state.last_ack)),
            deadline: Some(now + self.options.timeout),
            delivery: None,
        }
    }

    /// Network age over `[origin, horizon]` for every registered instance.
    pub fn report(&self, horizon: Timestamp) -> Result<NetworkAgeReport, AoiError> {
        aoi::naoi(
            self.instances.iter().map(|(id, s)| (*id, &s.tracker)),
            horizon,
        )
    }
}
