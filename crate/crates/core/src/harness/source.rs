//! Source process: registers its instances, answers clock sync, and answers
//! every poll with exactly one datagram.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::clock::Clock;
use super::config::{HarnessConfig, Role};
use super::emulator::{SensorEmulator, SensorProfile};
use super::HarnessError;
use crate::instance::InstanceId;
use crate::protocol::sync::respond;
use crate::protocol::{Packet, PacketKind, SourceEvent, SourceMachine, SourceOptions};
use crate::queueing::{QueueSpec, Update};
use crate::time::{Micros, Timestamp};

/// Registration is repeated this often until the destination answers.
pub const REGISTRATION_RETRY: Duration = Duration::from_millis(200);
/// Attempts before giving up on an unreachable destination.
pub const REGISTRATION_ATTEMPTS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInstanceSummary {
    pub profile: SensorProfile,
    pub generated: u64,
    pub polls: u64,
    pub data_sent: u64,
    pub fragments_sent: u64,
    pub empties_sent: u64,
    pub retransmissions: u64,
    /// Updates displaced from the single-slot queue by fresher ones.
    pub replaced: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub source_id: u16,
    pub registered: bool,
    pub sync_requests: u64,
    pub ignored_packets: u64,
    pub decode_errors: u64,
    pub instances: Vec<SourceInstanceSummary>,
}

enum Msg {
    Update(InstanceId, Update),
    Packet(Packet, Timestamp),
    DecodeError,
}

fn spawn_reader(
    socket: UdpSocket,
    clock: Clock,
    tx: Sender<Msg>,
    stop: Arc<AtomicBool>,
) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let mut buf = vec![0u8; 65_536];
        // the read timeout only bounds how long a stop request can go unnoticed
        let _ = socket.set_read_timeout(Some(Duration::from_millis(50)));
        while !stop.load(Ordering::Relaxed) {
            match socket.recv_from(&mut buf) {
                Ok((n, _)) => {
                    let at = clock.now();
                    let msg = match Packet::decode(&buf[..n]) {
                        Ok(p) => Msg::Packet(p, at),
                        Err(_) => Msg::DecodeError,
                    };
                    if tx.send(msg).is_err() {
                        break;
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                // ICMP unreachable surfaces as an error on some platforms
                Err(e) if e.kind() == ErrorKind::ConnectionRefused => {}
                Err(_) => break,
            }
        }
    })
}

fn spawn_emulator(
    mut emulator: SensorEmulator,
    instance: InstanceId,
    clock: Clock,
    end: Instant,
    tx: Sender<Msg>,
) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let mut next = Instant::now();
        loop {
            if next >= end {
                break;
            }
            thread::sleep(next.saturating_duration_since(Instant::now()));
            let payload = emulator.next_payload();
            let update = Update {
                gen_timestamp: clock.now(),
                info_type: instance.info_type,
                payload,
            };
            if tx.send(Msg::Update(instance, update)).is_err() {
                break;
            }
            next += emulator.next_gap().as_std();
        }
    })
}

pub fn run_source(cfg: &HarnessConfig) -> Result<SourceSummary, HarnessError> {
    cfg.validate()?;
    if cfg.role != Role::Source {
        return Err(HarnessError::Config(vec!["role: expected source".into()]));
    }
    let peer: SocketAddr = cfg.peer.expect("validated");
    let socket = UdpSocket::bind(cfg.bind).map_err(|source| HarnessError::Bind {
        addr: cfg.bind.to_string(),
        source,
    })?;
    let clock = Clock::new();
    let started = Instant::now();
    let end = started + Duration::from_secs_f64(cfg.duration_s);

    let options = SourceOptions {
        mtu_payload: cfg.mtu_payload,
        queue: QueueSpec::Lcfs1,
        abandon_after: None,
    };
    let mut machines: BTreeMap<InstanceId, (SensorProfile, SourceMachine, u64, u64)> = cfg
        .profiles
        .iter()
        .map(|p| {
            let id = InstanceId::new(cfg.source_id, p.info_type());
            (id, (*p, SourceMachine::new(id, options), 0, 0))
        })
        .collect();

    let (tx, rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));
    let mut threads = vec![spawn_reader(
        socket.try_clone()?,
        clock,
        tx.clone(),
        stop.clone(),
    )];
    for (id, (profile, ..)) in &machines {
        let emulator = SensorEmulator::new(*id, *profile, cfg.jitter, cfg.seed);
        threads.push(spawn_emulator(emulator, *id, clock, end, tx.clone()));
    }
    drop(tx);

    let ids: Vec<InstanceId> = machines.keys().copied().collect();
    let register = |socket: &UdpSocket| -> std::io::Result<()> {
        for id in &ids {
            socket.send_to(
                &Packet::empty(*id).encode().expect("empty packet encodes"),
                peer,
            )?;
        }
        Ok(())
    };
    register(&socket)?;
    let mut attempts = 1;
    let mut next_retry = Instant::now() + REGISTRATION_RETRY;
    let mut summary = SourceSummary {
        source_id: cfg.source_id,
        registered: false,
        sync_requests: 0,
        ignored_packets: 0,
        decode_errors: 0,
        instances: Vec::new(),
    };

    let outcome = loop {
        let now = Instant::now();
        if now >= end {
            break Ok(());
        }
        if !summary.registered && now >= next_retry {
            if attempts >= REGISTRATION_ATTEMPTS {
                break Err(HarnessError::Unreachable(peer.to_string()));
            }
            if let Err(e) = register(&socket) {
                log::debug!("registration send failed: {e}");
            }
            attempts += 1;
            next_retry = now + REGISTRATION_RETRY;
        }
        let wake = if summary.registered {
            end
        } else {
            end.min(next_retry)
        };
        let msg = match rx.recv_timeout(wake.saturating_duration_since(now)) {
            Ok(m) => m,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => break Ok(()),
        };
        match msg {
            Msg::Update(id, update) => {
                if let Some((_, m, generated, _)) = machines.get_mut(&id) {
                    *generated += 1;
                    m.step(SourceEvent::UpdateGenerated(update));
                }
            }
            Msg::DecodeError => summary.decode_errors += 1,
            Msg::Packet(packet, received) => match packet.kind {
                PacketKind::SyncReq => {
                    summary.registered = true;
                    summary.sync_requests += 1;
                    if let Some(resp) = respond(&packet, received, clock.now()) {
                        socket.send_to(&resp.encode().expect("sync response encodes"), peer)?;
                    }
                }
                PacketKind::Poll => match machines.get_mut(&packet.instance()) {
                    Some((_, m, _, polls)) => {
                        summary.registered = true;
                        *polls += 1;
                        if let Some(out) = m.step(SourceEvent::PollReceived(packet)) {
                            socket.send_to(&out.encode().expect("source packets encode"), peer)?;
                        }
                    }
                    None => summary.ignored_packets += 1,
                },
                _ => summary.ignored_packets += 1,
            },
        }
    };

    stop.store(true, Ordering::Relaxed);
    drop(rx);
    for t in threads {
        let _ = t.join();
    }
    summary.instances = machines
        .into_values()
        .map(|(profile, m, generated, polls)| {
            let c = m.counters();
            SourceInstanceSummary {
                profile,
                generated,
                polls,
                data_sent: c.data_sent,
                fragments_sent: c.fragments_sent,
                empties_sent: c.empties_sent,
                retransmissions: c.retransmissions,
                replaced: m.replaced_count(),
            }
        })
        .collect();
    log::info!(
        "source {} finished after {:?}",
        cfg.source_id,
        Micros(clock.now().0).as_std()
    );
    outcome.map(|()| summary)
}
