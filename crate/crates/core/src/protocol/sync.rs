//! Four-timestamp on-wire clock offset estimation.
//!
//! The requester stamps T1 when sending, the responder stamps T2 on receipt
//! and T3 when replying, the requester stamps T4 on receipt. T1 and T4 are on
//! the local clock, T2 and T3 on the remote one.

use thiserror::Error;

use super::wire::{Packet, PacketKind};
use crate::instance::InstanceId;
use crate::time::Timestamp;

/// Exchanges per synchronization session.
pub const DEFAULT_SYNC_ROUNDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyncError {
    #[error("invalid exchange: round-trip delay {delay_us} us is negative")]
    NegativeDelay { delay_us: i64 },
    #[error("invalid exchange: T4 precedes T1")]
    ReceiveBeforeSend,
    #[error("no completed exchanges")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncSample {
    /// Estimated remote-minus-local clock offset, µs. Half-microsecond
    /// resolution is exact in f64.
    pub offset_us: f64,
    /// Round-trip delay excluding the responder's hold time, µs.
    pub delay_us: i64,
}

impl SyncSample {
    pub fn offset_secs(&self) -> f64 {
        self.offset_us / 1e6
    }
}

fn signed(a: Timestamp, b: Timestamp) -> i128 {
    i128::from(a.0) - i128::from(b.0)
}

/// θ = ((T2 − T1) + (T3 − T4)) / 2 and δ = (T4 − T1) − (T3 − T2).
pub fn sync_offset(
    t1: Timestamp,
    t2: Timestamp,
    t3: Timestamp,
    t4: Timestamp,
) -> Result<SyncSample, SyncError> {
    if t4 < t1 {
        return Err(SyncError::ReceiveBeforeSend);
    }
    let delay = signed(t4, t1) - signed(t3, t2);
    if delay < 0 {
        return Err(SyncError::NegativeDelay {
            delay_us: delay as i64,
        });
    }
    let doubled = signed(t2, t1) + signed(t3, t4);
    Ok(SyncSample {
        offset_us: doubled as f64 / 2.0,
        delay_us: delay as i64,
    })
}

/// Answers a request received at `t2`, replying at `t3` (remote clock).
pub fn respond(request: &Packet, t2: Timestamp, t3: Timestamp) -> Option<Packet> {
    (request.kind == PacketKind::SyncReq).then(|| Packet::sync_response(request, t2, t3))
}

/// Requester side of a multi-round session. Keeps the offset of the
/// minimum-delay exchange.
#[derive(Debug, Clone)]
pub struct SyncSession {
    peer: InstanceId,
    rounds: usize,
    next_exchange: u32,
    outstanding: Option<(u32, Timestamp)>,
    samples: Vec<SyncSample>,
    rejected: u64,
}

impl SyncSession {
    pub fn new(peer: InstanceId, rounds: usize) -> Self {
        SyncSession {
            peer,
            rounds,
            next_exchange: 0,
            outstanding: None,
            samples: Vec::new(),
            rejected: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.samples.len() >= self.rounds
    }

    pub fn samples(&self) -> &[SyncSample] {
        &self.samples
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Builds the next request stamped with `t1`. Re-requesting while one is
    /// outstanding abandons the earlier exchange.
    pub fn request(&mut self, t1: Timestamp) -> Packet {
        let exchange = self.next_exchange;
        self.next_exchange = self.next_exchange.wrapping_add(1);
        self.outstanding = Some((exchange, t1));
        Packet::sync_request(self.peer, exchange, t1)
    }

    /// Feeds a response received at local time `t4`. Returns whether it was
    /// accepted.
    pub fn on_response(&mut self, response: &Packet, t4: Timestamp) -> bool {
        let Some((exchange, t1)) = self.outstanding else {
            return false;
        };
        if response.kind != PacketKind::SyncResp
            || response.seq != exchange
            || response.aux[0] != t1.0
        {
            return false;
        }
        self.outstanding = None;
        match sync_offset(
            t1,
            Timestamp(response.aux[1]),
            Timestamp(response.aux[2]),
            t4,
        ) {
            Ok(sample) => {
                self.samples.push(sample);
                true
            }
            Err(_) => {
                self.rejected += 1;
                false
            }
        }
    }

    pub fn best(&self) -> Result<SyncSample, SyncError> {
        self.samples
            .iter()
            .copied()
            .min_by_key(|s| s.delay_us)
            .ok_or(SyncError::NoSamples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(x: u64) -> Timestamp {
        Timestamp(x)
    }

    #[test]
    fn symmetric_and_shifted() {
        let s = sync_offset(t(0), t(10), t(11), t(21)).unwrap();
        assert_eq!((s.offset_us, s.delay_us), (0.0, 20));
        let s = sync_offset(t(0), t(15), t(16), t(21)).unwrap();
        assert_eq!((s.offset_us, s.delay_us), (5.0, 20));
    }

    #[test]
    fn invalid_exchanges() {
        assert_eq!(
            sync_offset(t(10), t(0), t(0), t(5)),
            Err(SyncError::ReceiveBeforeSend)
        );
        assert!(matches!(
            sync_offset(t(0), t(0), t(30), t(10)),
            Err(SyncError::NegativeDelay { delay_us: -20 })
        ));
    }

    #[test]
    fn session_keeps_min_delay() {
        let peer = InstanceId::new(1, 0);
        let mut session = SyncSession::new(peer, 3);
        // true offset 1000 us; one-way delays vary per round
        let delays = [(50, 70), (5, 5), (30, 10)];
        let mut local = 0u64;
        for (d1, d2) in delays {
            let req = session.request(t(local));
            let t2 = t(local + d1 + 1000);
            let t3 = t(t2.0 + 3);
            let resp = respond(&req, t2, t3).unwrap();
            assert!(session.on_response(&resp, t(t3.0 - 1000 + d2)));
            local += 500;
        }
        assert!(session.is_done());
        let best = session.best().unwrap();
        assert_eq!(best.delay_us, 10);
        assert_eq!(best.offset_us, 1000.0);
    }

    #[test]
    fn mismatched_responses_are_rejected() {
        let peer = InstanceId::new(1, 0);
        let mut session = SyncSession::new(peer, 1);
        let req = session.request(t(5));
        let mut resp = respond(&req, t(6), t(7)).unwrap();
        resp.seq += 1;
        assert!(!session.on_response(&resp, t(9)));
        assert!(SyncSession::new(peer, 1).best().is_err());
    }
}
