//! Source-side automaton for one (source, info type) instance.
//!
//! Updates are queued as they are generated and never sent spontaneously.
//! Every valid poll produces exactly one outbound packet: EMPTY when there is
//! nothing to send, DATA when the released update fits in one packet, or the
//! next FRAG of the update being drained. While draining, the queue keeps
//! absorbing fresher updates but the fragment stream is not interrupted.

use super::fragment::{fragment, DEFAULT_MTU_PAYLOAD};
use super::wire::{Packet, PacketKind};
use crate::instance::InstanceId;
use crate::queueing::{FragFifo, QueueDiscipline, QueueSpec, QueueStats, Update};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceState {
    AwaitPoll,
    Draining,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceEvent {
    PollReceived(Packet),
    UpdateGenerated(Update),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceOptions {
    pub mtu_payload: usize,
    pub queue: QueueSpec,
    /// Give up on a fragmented update after this many unacknowledged polls in
    /// a row. `None` retransmits forever.
    pub abandon_after: Option<u32>,
}

impl Default for SourceOptions {
    fn default() -> Self {
        SourceOptions {
            mtu_payload: DEFAULT_MTU_PAYLOAD,
            queue: QueueSpec::Lcfs1,
            abandon_after: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceCounters {
    pub malformed_polls: u64,
    pub misrouted_updates: u64,
    pub rejected_updates: u64,
    pub empties_sent: u64,
    pub data_sent: u64,
    pub fragments_sent: u64,
    pub retransmissions: u64,
    pub abandoned_updates: u64,
}

#[derive(Debug, Clone)]
pub struct SourceMachine {
    instance: InstanceId,
    options: SourceOptions,
    state: SourceState,
    queue: QueueDiscipline<Update>,
    frag_fifo: FragFifo<Packet>,
    current: Option<Packet>,
    next_seq: u32,
    unacked_polls: u32,
    counters: SourceCounters,
}

impl SourceMachine {
    pub fn new(instance: InstanceId, options: SourceOptions) -> Self {
        SourceMachine {
            instance,
            options,
            state: SourceState::AwaitPoll,
            queue: options.queue.build(),
            frag_fifo: FragFifo::new(),
            current: None,
            next_seq: 0,
            unacked_polls: 0,
            counters: SourceCounters::default(),
        }
    }

    pub fn instance(&self) -> InstanceId {
        self.instance
    }

    pub fn state(&self) -> SourceState {
        self.state
    }

    pub fn counters(&self) -> SourceCounters {
        self.counters
    }

    pub fn queue(&self) -> &QueueDiscipline<Update> {
        &self.queue
    }

    pub fn queue_stats(&self) -> QueueStats {
        self.queue.stats()
    }

    /// LCFS displacements, zero for FCFS queues.
    pub fn replaced_count(&self) -> u64 {
        match &self.queue {
            QueueDiscipline::Lcfs1(q) => q.replaced_count(),
            QueueDiscipline::Fcfs(_) => 0,
        }
    }

    /// Remaining fragments of the update being drained, including the one
    /// awaiting acknowledgement.
    pub fn fragments_outstanding(&self) -> usize {
        self.frag_fifo.len() + usize::from(self.current.is_some())
    }

    /// Returns the outbound packet, if any. Updates never produce one.
    pub fn step(&mut self, event: SourceEvent) -> Option<Packet> {
        match event {
            SourceEvent::UpdateGenerated(update) => {
                if update.info_type != self.instance.info_type {
                    self.counters.misrouted_updates += 1;
                } else if let Some(_dropped) = self.queue.push(update) {
                    // dropped updates are visible through queue stats
                }
                None
            }
            SourceEvent::PollReceived(poll) => {
                if poll.kind != PacketKind::Poll || poll.instance() != self.instance {
                    self.counters.malformed_polls += 1;
                    return None;
                }
                Some(self.on_poll(&poll))
            }
        }
    }

    fn on_poll(&mut self, poll: &Packet) -> Packet {
        if self.state == SourceState::Draining {
            let current = self
                .current
                .as_ref()
                .expect("draining implies a current fragment");
            let acked = poll.frag_ack() == current.as_ack();
            if !acked {
                self.unacked_polls += 1;
                if self
                    .options
                    .abandon_after
                    .is_none_or(|k| self.unacked_polls < k)
                {
                    self.counters.retransmissions += 1;
                    return current.clone();
                }
                self.counters.abandoned_updates += 1;
                self.frag_fifo.clear();
            }
            self.unacked_polls = 0;
            if let Some(next) = self.frag_fifo.pop() {
                self.counters.fragments_sent += 1;
                self.current = Some(next.clone());
                return next;
            }
            self.current = None;
            self.state = SourceState::AwaitPoll;
        }
        self.release()
    }

    fn release(&mut self) -> Packet {
        loop {
            let Some(update) = self.queue.take() else {
                self.counters.empties_sent += 1;
                return Packet::empty(self.instance);
            };
            let seq = self.next_seq;
            let packets =
                match fragment(&update, self.instance.source, seq, self.options.mtu_payload) {
                    Ok(p) => p,
                    Err(_) => {
                        self.counters.rejected_updates += 1;
                        continue;
                    }
                };
            self.next_seq = self.next_seq.wrapping_add(1);
            let mut packets = packets.into_iter();
            let first = packets.next().expect("fragment yields at least one packet");
            if first.kind == PacketKind::Data {
                self.counters.data_sent += 1;
                return first;
            }
            self.frag_fifo.extend(packets);
            self.counters.fragments_sent += 1;
            self.current = Some(first.clone());
            self.state = SourceState::Draining;
            self.unacked_polls = 0;
            return first;
        }
    }
}
