//! Shared generators and invariant checkers for the integration tests.
#![allow(dead_code)]

use bytes::Bytes;
use freshnet::protocol::destination::DestinationState;
use freshnet::protocol::wire::{FragAck, MAX_PAYLOAD};
use freshnet::protocol::{
    DestinationEvent, DestinationMachine, DestinationOptions, Packet, PacketKind,
};
use freshnet::queueing::QueueSpec;
use freshnet::scheduling::Policy;
use freshnet::sim::polling::TraceEntry;
use freshnet::sim::{AccessSpec, SimConfig, StreamSpec};
use freshnet::{InstanceId, Micros, Timestamp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn payload(rng: &mut ChaCha8Rng, min: usize) -> Bytes {
    // mostly small, occasionally up to the datagram limit
    let max = if rng.random_ratio(1, 50) {
        MAX_PAYLOAD
    } else {
        2000
    };
    let mut v = vec![0u8; rng.random_range(min..=max)];
    rng.fill(&mut v[..]);
    Bytes::from(v)
}

/// Any packet that passes validation, every kind equally likely.
pub fn random_packet(rng: &mut ChaCha8Rng) -> Packet {
    let id = InstanceId::new(rng.random(), rng.random());
    let kind = PacketKind::ALL[rng.random_range(0..PacketKind::ALL.len())];
    match kind {
        PacketKind::Poll => {
            let ack = rng.random_bool(0.5).then(|| {
                let total = rng.random_range(1..=u16::MAX);
                FragAck {
                    seq: rng.random(),
                    index: rng.random_range(0..total),
                    total,
                }
            });
            Packet::poll(id, ack)
        }
        PacketKind::Data => {
            Packet::data(id, rng.random(), Timestamp(rng.random()), payload(rng, 0))
        }
        PacketKind::Frag => {
            let mut p = Packet::data(id, rng.random(), Timestamp(rng.random()), payload(rng, 1));
            p.kind = PacketKind::Frag;
            p.frag_total = rng.random_range(2..=u16::MAX);
            p.frag_index = rng.random_range(0..p.frag_total);
            p
        }
        PacketKind::Empty => Packet::empty(id),
        PacketKind::SyncReq => Packet::sync_request(id, rng.random(), Timestamp(rng.random())),
        PacketKind::SyncResp => {
            let req = Packet::sync_request(id, rng.random(), Timestamp(rng.random()));
            Packet::sync_response(&req, Timestamp(rng.random()), Timestamp(rng.random()))
        }
    }
}

/// Walks a simulator trace and checks that a poll is only emitted when none
/// is outstanding: at start, or on the event that resolves the previous one
/// (its response or its timeout). Returns the number of polls seen.
pub fn check_one_outstanding(trace: &[TraceEntry]) -> Result<usize, String> {
    let mut outstanding: Option<InstanceId> = None;
    let mut polls = 0;
    for (i, e) in trace.iter().enumerate() {
        let (resolves, poll) = match e {
            TraceEntry::Start { output, .. } => (outstanding.is_none(), &output.poll),
            TraceEntry::Destination { event, output } => {
                let resolves = match event {
                    DestinationEvent::TimeoutExpired { .. } => outstanding.is_some(),
                    DestinationEvent::Received { packet, .. } => {
                        outstanding == Some(packet.instance())
                            && matches!(
                                packet.kind,
                                PacketKind::Data | PacketKind::Frag | PacketKind::Empty
                            )
                    }
                };
                (resolves, &output.poll)
            }
            _ => continue,
        };
        match poll {
            Some(_) if !resolves => {
                return Err(format!(
                    "entry {i}: second poll while {outstanding:?} outstanding"
                ))
            }
            Some(p) => {
                polls += 1;
                outstanding = Some(p.instance());
            }
            None if resolves && outstanding.is_some() && !matches!(e, TraceEntry::Start { .. }) => {
                return Err(format!(
                    "entry {i}: outstanding poll resolved without a new one"
                ));
            }
            None => {}
        }
    }
    Ok(polls)
}

/// Lossy, fragmented, multi-stream configuration whose trace has at least
/// `events` automaton steps.
pub fn busy_trace_config(seed: u64) -> SimConfig {
    let mut c = SimConfig::saturated(
        4,
        1.0,
        AccessSpec::polling(Policy::Mw),
        QueueSpec::Lcfs1,
        12.0,
    );
    c.traffic = vec![
        StreamSpec::periodic(0, 10.0, 19_000),
        StreamSpec::poisson(1, 200.0, 20),
        StreamSpec::periodic(2, 1.0, 50),
    ];
    c.channel.success = vec![0.95, 0.6, 0.8];
    c.channel.poll_loss = true;
    c.with_seed(seed)
}

/// Drives a bare destination automaton with random packets and timeouts and
/// checks the one-outstanding-poll rule against a model of its state.
pub fn random_destination_trace(rng: &mut ChaCha8Rng, events: usize) -> Result<(), String> {
    let auto_register = rng.random_bool(0.5);
    let timeout = Micros(rng.random_range(100..100_000));
    let mut dest = DestinationMachine::new(DestinationOptions {
        policy: [Policy::Mw, Policy::Maf, Policy::Rr][rng.random_range(0..3)],
        timeout,
        auto_register,
        ..DestinationOptions::default()
    });
    let ids: Vec<InstanceId> = (0..rng.random_range(1..8u16))
        .map(|s| InstanceId::new(s, rng.random_range(0..3)))
        .collect();
    let mut now = Timestamp(0);
    let mut seq = 0u32;
    if !auto_register {
        for id in &ids {
            dest.declare(*id, now);
        }
        let out = dest.start(now);
        if out.poll.is_none() && !ids.is_empty() {
            return Err("start did not poll".into());
        }
    }
    for step in 0..events {
        now += Micros(rng.random_range(0..2000));
        let before = dest.state();
        let polled = match before {
            DestinationState::AwaitData { polled, .. } => Some(polled),
            DestinationState::Idle => None,
        };
        let timeout_event = rng.random_ratio(1, 5);
        let (event, answers, eligible) = if timeout_event {
            (
                DestinationEvent::TimeoutExpired { now },
                polled.is_some(),
                true,
            )
        } else {
            // mostly answer the outstanding poll, sometimes stray traffic
            let id = match polled {
                Some(p) if rng.random_ratio(3, 4) => p,
                _ => ids[rng.random_range(0..ids.len())],
            };
            let gen = Timestamp(now.0.saturating_sub(rng.random_range(0..50_000)));
            seq += 1;
            let packet = match rng.random_range(0..4) {
                0 => Packet::empty(id),
                1 => Packet::sync_request(id, seq, now),
                2 => {
                    let mut p = Packet::data(id, seq, gen, Bytes::from_static(b"fr"));
                    p.kind = PacketKind::Frag;
                    p.frag_total = 3;
                    p.frag_index = rng.random_range(0..3);
                    p
                }
                _ => Packet::data(id, seq, gen, Bytes::from_static(b"d")),
            };
            let data_like = packet.kind != PacketKind::SyncReq;
            let known = dest.tracker(id).is_some() || auto_register;
            (
                DestinationEvent::Received { packet, now },
                data_like && known && polled == Some(id),
                data_like && known,
            )
        };
        let out = dest.step(event);
        let may_poll = answers || (polled.is_none() && eligible && !timeout_event);
        match &out.poll {
            Some(_) if !may_poll => {
                return Err(format!("step {step}: poll while one was outstanding"))
            }
            None if answers => {
                return Err(format!(
                    "step {step}: answered poll not followed by a new one"
                ))
            }
            Some(p) => {
                if dest.state()
                    != (DestinationState::AwaitData {
                        polled: p.instance(),
                        since: now,
                    })
                {
                    return Err(format!("step {step}: state does not record the new poll"));
                }
                if out.deadline != Some(now + timeout) {
                    return Err(format!("step {step}: deadline {:?}", out.deadline));
                }
            }
            None => {
                if dest.state() != before {
                    return Err(format!("step {step}: state changed without a poll"));
                }
            }
        }
    }
    Ok(())
}
