//! Destination process: sync with each source as it registers, then poll.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, ErrorKind, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::clock::Clock;
use super::config::{HarnessConfig, Role};
use super::emulator::verify_payload;
use super::HarnessError;
use crate::instance::InstanceId;
use crate::protocol::{
    DestinationEvent, DestinationMachine, DestinationOptions, DestinationOutput, Packet,
    PacketKind, SyncSession,
};
use crate::sim::metrics::{write_rows, MetricsRow};
use crate::time::{Micros, Timestamp};

/// Sync requests are re-sent if unanswered for this long.
const SYNC_RETRY: Micros = Micros::from_millis(200);
/// Metrics rows are appended this often.
const FLUSH_EVERY: Micros = Micros::from_millis(1000);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub source_id: u16,
    pub info_type: u8,
    pub polls: u64,
    pub timeouts: u64,
    pub deliveries: u64,
    pub delivered_bytes: u64,
    pub corrupt: u64,
    pub average_age_s: f64,
}

impl InstanceSummary {
    pub fn instance(&self) -> InstanceId {
        InstanceId::new(self.source_id, self.info_type)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncSummary {
    pub source_id: u16,
    /// Source clock minus destination clock, µs.
    pub offset_us: f64,
    pub delay_us: i64,
    /// Change of the offset across re-syncs, µs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestinationSummary {
    pub duration_s: f64,
    /// Absent when no source ever registered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naoi_s: Option<f64>,
    pub deliveries: u64,
    pub corrupt_payloads: u64,
    pub polls: u64,
    pub timeouts: u64,
    pub stray_packets: u64,
    pub decode_errors: u64,
    pub causality_errors: u64,
    /// Worst observed delay between a poll deadline and its handling, µs.
    pub max_timer_lateness_us: u64,
    pub sync: Vec<SyncSummary>,
    pub instances: Vec<InstanceSummary>,
}

struct Peer {
    addr: SocketAddr,
    session: Option<SyncSession>,
    retry_at: Timestamp,
    offset_us: Option<f64>,
    delay_us: i64,
    drift_us: Option<f64>,
    last_sync: Timestamp,
    pending: BTreeSet<InstanceId>,
}

/// Delivery log next to the metrics file: one line per registration and per
/// completed update, enough to recompute every age average offline.
pub fn delivery_log_path(metrics: &Path) -> PathBuf {
    let mut name = metrics.file_stem().unwrap_or_default().to_os_string();
    name.push(".deliveries.csv");
    metrics.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    /// `register`, `deliver`, or a final `end` marking the horizon.
    pub event: String,
    pub source_id: u16,
    pub info_type: u8,
    pub seq: u32,
    pub gen_us: u64,
    pub received_us: u64,
    pub bytes: usize,
    pub intact: bool,
}

struct Outputs {
    metrics: Option<(BufWriter<File>, bool)>,
    deliveries: Option<csv::Writer<BufWriter<File>>>,
}

impl Outputs {
    fn open(path: Option<&Path>) -> Result<Self, HarnessError> {
        let Some(path) = path else {
            return Ok(Outputs {
                metrics: None,
                deliveries: None,
            });
        };
        let metrics = BufWriter::new(File::create(path)?);
        let log = csv::Writer::from_writer(BufWriter::new(File::create(delivery_log_path(path))?));
        Ok(Outputs {
            metrics: Some((metrics, true)),
            deliveries: Some(log),
        })
    }

    fn row(&mut self, row: MetricsRow) -> Result<(), HarnessError> {
        if let Some((w, header)) = &mut self.metrics {
            write_rows(&mut *w, &[row], *header)?;
            *header = false;
            w.flush()?;
        }
        Ok(())
    }

    fn delivery(&mut self, rec: &DeliveryRecord) -> Result<(), HarnessError> {
        if let Some(w) = &mut self.deliveries {
            w.serialize(rec)?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), HarnessError> {
        if let Some(w) = &mut self.deliveries {
            w.flush()?;
        }
        Ok(())
    }
}

struct Destination<'a> {
    cfg: &'a HarnessConfig,
    config_hash: String,
    socket: UdpSocket,
    clock: Clock,
    machine: DestinationMachine,
    peers: BTreeMap<u16, Peer>,
    deadline: Option<Timestamp>,
    out: Outputs,
    corrupt: BTreeMap<InstanceId, u64>,
    decode_errors: u64,
    max_lateness: Micros,
}

impl Destination<'_> {
    fn send(&self, packet: &Packet, to: SocketAddr) {
        let bytes = packet.encode().expect("destination packets encode");
        if let Err(e) = self.socket.send_to(&bytes, to) {
            log::warn!("send to {to} failed: {e}");
        }
    }

    fn handle(&mut self, out: DestinationOutput) {
        if let Some(poll) = out.poll {
            match self.peers.get(&poll.source_id) {
                Some(peer) => self.send(&poll, peer.addr),
                None => log::warn!("poll for unknown source {}", poll.source_id),
            }
            self.deadline = out.deadline;
        }
    }

    fn start_sync(&mut self, source: u16, now: Timestamp) {
        let rounds = self.cfg.sync_rounds;
        let peer = self.peers.get_mut(&source).expect("known peer");
        let mut session = SyncSession::new(InstanceId::new(source, 0), rounds);
        let req = session.request(now);
        peer.session = Some(session);
        peer.retry_at = now + SYNC_RETRY;
        peer.last_sync = now;
        let addr = peer.addr;
        self.send(&req, addr);
    }

    fn register(&mut self, id: InstanceId, now: Timestamp) -> Result<(), HarnessError> {
        self.machine.declare(id, now);
        self.out.delivery(&DeliveryRecord {
            event: "register".into(),
            source_id: id.source,
            info_type: id.info_type,
            seq: 0,
            gen_us: now.0,
            received_us: now.0,
            bytes: 0,
            intact: true,
        })?;
        log::info!("registered {id}");
        let out = self.machine.start(now);
        self.handle(out);
        Ok(())
    }

    fn on_sync_response(&mut self, packet: &Packet, now: Timestamp) -> Result<(), HarnessError> {
        let Some(peer) = self.peers.get_mut(&packet.source_id) else {
            return Ok(());
        };
        let Some(session) = &mut peer.session else {
            return Ok(());
        };
        if !session.on_response(packet, now) {
            return Ok(());
        }
        if !session.is_done() {
            let req = session.request(now);
            peer.retry_at = now + SYNC_RETRY;
            let addr = peer.addr;
            self.send(&req, addr);
            return Ok(());
        }
        let best = session.best().expect("finished session has samples");
        if let Some(old) = peer.offset_us {
            peer.drift_us = Some(best.offset_us - old);
        }
        peer.offset_us = Some(best.offset_us);
        peer.delay_us = best.delay_us;
        peer.session = None;
        log::info!(
            "source {} offset {:.1} us (delay {} us)",
            packet.source_id,
            best.offset_us,
            best.delay_us
        );
        let pending = std::mem::take(&mut peer.pending);
        for id in pending {
            self.register(id, now)?;
        }
        Ok(())
    }

    fn on_packet(
        &mut self,
        mut packet: Packet,
        from: SocketAddr,
        now: Timestamp,
    ) -> Result<(), HarnessError> {
        match packet.kind {
            PacketKind::SyncResp => return self.on_sync_response(&packet, now),
            PacketKind::Data | PacketKind::Frag | PacketKind::Empty => {}
            PacketKind::Poll | PacketKind::SyncReq => return Ok(()),
        }
        let id = packet.instance();
        if let Entry::Vacant(slot) = self.peers.entry(id.source) {
            slot.insert(Peer {
                addr: from,
                session: None,
                retry_at: now,
                offset_us: None,
                delay_us: 0,
                drift_us: None,
                last_sync: now,
                pending: BTreeSet::new(),
            });
            self.start_sync(id.source, now);
        }
        let peer = self.peers.get_mut(&id.source).expect("inserted above");
        let Some(offset) = peer.offset_us else {
            peer.pending.insert(id);
            return Ok(());
        };
        if self.machine.tracker(id).is_none() {
            self.register(id, now)?;
            // the registration packet itself carries nothing to deliver
            if packet.kind == PacketKind::Empty {
                return Ok(());
            }
        }
        if packet.kind != PacketKind::Empty {
            let local = (packet.gen_timestamp.0 as f64 - offset).round().max(0.0);
            packet.gen_timestamp = Timestamp(local as u64);
        }
        let out = self
            .machine
            .step(DestinationEvent::Received { packet, now });
        if let Some(d) = &out.delivery {
            let intact = verify_payload(&d.payload);
            if !intact {
                *self.corrupt.entry(d.instance).or_default() += 1;
                log::warn!("corrupt payload from {} seq {}", d.instance, d.seq);
            }
            self.out.delivery(&DeliveryRecord {
                event: "deliver".into(),
                source_id: d.instance.source,
                info_type: d.instance.info_type,
                seq: d.seq,
                gen_us: d.gen_timestamp.0,
                received_us: d.received_at.0,
                bytes: d.payload.len(),
                intact,
            })?;
        }
        self.handle(out);
        Ok(())
    }

    fn metrics_row(&self, now: Timestamp) -> MetricsRow {
        let report = self.machine.report(now).ok();
        let (mut deliveries, mut bytes, mut timeouts) = (0, 0, 0);
        for id in self.machine.instances() {
            let c = self.machine.instance_counters(id).unwrap_or_default();
            deliveries += c.deliveries;
            bytes += c.delivered_bytes;
            timeouts += c.timeouts;
        }
        let secs = now.as_secs_f64();
        MetricsRow {
            config_hash: self.config_hash.clone(),
            policy: self.cfg.policy.label().into(),
            access: "udp".into(),
            queue: "lcfs1".into(),
            n_sources: self.peers.len() as u16,
            lambda_hz: 0.0,
            seed: self.cfg.seed,
            horizon_s: secs,
            naoi_s: report.map_or(f64::NAN, |r| r.naoi),
            throughput_bps: if secs > 0.0 {
                bytes as f64 * 8.0 / secs
            } else {
                0.0
            },
            deliveries,
            drops: self.corrupt.values().sum(),
            timeouts,
        }
    }
}

/// Hash of the configuration; the seed is not part of it.
pub fn harness_config_hash(cfg: &HarnessConfig) -> String {
    let text = toml::to_string(cfg).expect("harness config serializes");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

pub fn run_destination(cfg: &HarnessConfig) -> Result<DestinationSummary, HarnessError> {
    cfg.validate()?;
    if cfg.role != Role::Destination {
        return Err(HarnessError::Config(vec![
            "role: expected destination".into()
        ]));
    }
    let socket = UdpSocket::bind(cfg.bind).map_err(|source| HarnessError::Bind {
        addr: cfg.bind.to_string(),
        source,
    })?;
    let clock = Clock::new();
    let options = DestinationOptions {
        policy: cfg.policy,
        timeout: Micros::from_millis(cfg.timeout_ms),
        auto_register: false,
        ..DestinationOptions::default()
    };
    let mut d = Destination {
        cfg,
        config_hash: harness_config_hash(cfg),
        socket,
        clock,
        machine: DestinationMachine::new(options),
        peers: BTreeMap::new(),
        deadline: None,
        out: Outputs::open(cfg.metrics_path.as_deref())?,
        corrupt: BTreeMap::new(),
        decode_errors: 0,
        max_lateness: Micros::ZERO,
    };
    let end = Timestamp::from_secs_f64(cfg.duration_s);
    let resync = cfg.resync_s.map(Micros::from_secs_f64);
    let mut next_flush = Timestamp::ZERO + FLUSH_EVERY;
    let mut buf = vec![0u8; 65_536];

    loop {
        let now = d.clock.now();
        if now >= end {
            break;
        }
        if let Some(deadline) = d.deadline.filter(|dl| now >= *dl) {
            let late = now - deadline;
            if late > d.max_lateness {
                d.max_lateness = late;
            }
            if late > Micros::from_millis(10) {
                log::warn!("poll timer fired {} us late", late.0);
            }
            d.deadline = None;
            let out = d.machine.step(DestinationEvent::TimeoutExpired { now });
            d.handle(out);
        }
        let due: Vec<u16> = d
            .peers
            .iter()
            .filter(|(_, p)| {
                (p.session.is_some() && now >= p.retry_at)
                    || (p.session.is_none()
                        && p.offset_us.is_some()
                        && resync.is_some_and(|r| now >= p.last_sync + r))
            })
            .map(|(s, _)| *s)
            .collect();
        for source in due {
            let peer = d.peers.get_mut(&source).expect("listed above");
            match &mut peer.session {
                Some(session) => {
                    let req = session.request(now);
                    peer.retry_at = now + SYNC_RETRY;
                    let addr = peer.addr;
                    d.send(&req, addr);
                }
                None => d.start_sync(source, now),
            }
        }
        if now >= next_flush {
            let row = d.metrics_row(now);
            d.out.row(row)?;
            d.out.flush()?;
            next_flush = now + FLUSH_EVERY;
        }

        let mut wake = end.min(next_flush);
        if let Some(dl) = d.deadline {
            wake = wake.min(dl);
        }
        for p in d.peers.values() {
            if p.session.is_some() {
                wake = wake.min(p.retry_at);
            }
        }
        let wait = d.clock.until(wake).max(Duration::from_micros(50));
        d.socket.set_read_timeout(Some(wait))?;
        match d.socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                let at = d.clock.now();
                match Packet::decode(&buf[..n]) {
                    Ok(packet) => d.on_packet(packet, from, at)?,
                    Err(e) => {
                        d.decode_errors += 1;
                        log::warn!("undecodable datagram from {from}: {e}");
                    }
                }
            }
            Err(e)
                if matches!(
                    e.kind(),
                    ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::ConnectionRefused
                ) => {}
            Err(e) => return Err(e.into()),
        }
    }

    let horizon = d.clock.now();
    d.out.delivery(&DeliveryRecord {
        event: "end".into(),
        source_id: 0,
        info_type: 0,
        seq: 0,
        gen_us: horizon.0,
        received_us: horizon.0,
        bytes: 0,
        intact: true,
    })?;
    let row = d.metrics_row(horizon);
    d.out.row(row)?;
    d.out.flush()?;
    let report = d.machine.report(horizon).ok();
    let counters = d.machine.counters();
    let instances: Vec<InstanceSummary> = d
        .machine
        .instances()
        .map(|id| {
            let c = d.machine.instance_counters(id).unwrap_or_default();
            InstanceSummary {
                source_id: id.source,
                info_type: id.info_type,
                polls: c.polls,
                timeouts: c.timeouts,
                deliveries: c.deliveries,
                delivered_bytes: c.delivered_bytes,
                corrupt: d.corrupt.get(&id).copied().unwrap_or(0),
                average_age_s: report
                    .as_ref()
                    .map_or(f64::NAN, |r| r.per_source_average[&id]),
            }
        })
        .collect();
    Ok(DestinationSummary {
        duration_s: horizon.as_secs_f64(),
        naoi_s: report.map(|r| r.naoi),
        deliveries: instances.iter().map(|i| i.deliveries).sum(),
        corrupt_payloads: d.corrupt.values().sum(),
        polls: counters.polls,
        timeouts: counters.timeouts,
        stray_packets: counters.stray_packets,
        decode_errors: d.decode_errors,
        causality_errors: counters.causality_errors,
        max_timer_lateness_us: d.max_lateness.0,
        sync: d
            .peers
            .iter()
            .filter_map(|(s, p)| {
                p.offset_us.map(|offset_us| SyncSummary {
                    source_id: *s,
                    offset_us,
                    delay_us: p.delay_us,
                    drift_us: p.drift_us,
                })
            })
            .collect(),
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::emulator::SensorProfile;
    use crate::harness::source::run_source;
    use std::thread;

    #[test]
    fn loopback_smoke() {
        let probe = UdpSocket::bind("127.0.0.1:0").unwrap();
        let addr = probe.local_addr().unwrap();
        drop(probe);
        let dir = tempfile::tempdir().unwrap();
        let mut dcfg = HarnessConfig::destination(addr, 3.0);
        dcfg.metrics_path = Some(dir.path().join("m.csv"));
        let dest = thread::spawn(move || run_destination(&dcfg).unwrap());
        thread::sleep(Duration::from_millis(100));
        let scfg = HarnessConfig::source(
            addr,
            4,
            vec![SensorProfile::Imu, SensorProfile::Camera],
            3.2,
        );
        let src = thread::spawn(move || run_source(&scfg).unwrap());
        let summary = dest.join().unwrap();
        let source = src.join().unwrap();
        assert!(source.registered);
        assert_eq!(summary.instances.len(), 2);
        assert_eq!(summary.corrupt_payloads, 0);
        assert!(
            summary.instances.iter().all(|i| i.deliveries > 0),
            "{summary:?}"
        );
        assert!(summary.naoi_s.unwrap() < 1.0);
        assert!(dir.path().join("m.deliveries.csv").exists());
    }

    #[test]
    fn idle_destination_exits_cleanly() {
        let cfg = HarnessConfig::destination("127.0.0.1:0".parse().unwrap(), 0.3);
        let s = run_destination(&cfg).unwrap();
        assert_eq!((s.deliveries, s.naoi_s), (0, None));
    }

    #[test]
    fn unreachable_destination_fails() {
        // nothing listens on this port; registration gives up
        let probe = UdpSocket::bind("127.0.0.1:0").unwrap();
        let addr = probe.local_addr().unwrap();
        drop(probe);
        let mut cfg = HarnessConfig::source(addr, 1, vec![SensorProfile::Gps], 30.0);
        cfg.duration_s = 30.0;
        let started = std::time::Instant::now();
        assert!(matches!(
            run_source(&cfg),
            Err(HarnessError::Unreachable(_))
        ));
        assert!(started.elapsed() < Duration::from_secs(15));
    }
}
