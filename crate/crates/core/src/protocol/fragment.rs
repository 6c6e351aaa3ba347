//! Splitting updates into datagram-sized pieces and putting them back together.

use bytes::{Bytes, BytesMut};
use thiserror::Error;

use super::wire::{Packet, PacketKind, MAX_PAYLOAD};
use crate::instance::InstanceId;
use crate::queueing::Update;
use crate::time::Timestamp;

pub const DEFAULT_MTU_PAYLOAD: usize = 1400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FragmentError {
    #[error("zero-size updates cannot be sent")]
    EmptyUpdate,
    #[error("mtu payload must be between 1 and {MAX_PAYLOAD} bytes, got {0}")]
    BadMtu(usize),
    #[error("update of {size} bytes needs more than 65535 fragments at mtu {mtu}")]
    TooManyFragments { size: usize, mtu: usize },
}

/// One DATA packet when the update fits, otherwise `⌈size / mtu⌉` FRAG
/// packets sharing `seq` and the generation timestamp.
pub fn fragment(
    update: &Update,
    source_id: u16,
    seq: u32,
    mtu_payload: usize,
) -> Result<Vec<Packet>, FragmentError> {
    if mtu_payload == 0 || mtu_payload > MAX_PAYLOAD {
        return Err(FragmentError::BadMtu(mtu_payload));
    }
    let size = update.payload.len();
    if size == 0 {
        return Err(FragmentError::EmptyUpdate);
    }
    let instance = InstanceId::new(source_id, update.info_type);
    if size <= mtu_payload {
        return Ok(vec![Packet::data(
            instance,
            seq,
            update.gen_timestamp,
            update.payload.clone(),
        )]);
    }
    let total = size.div_ceil(mtu_payload);
    let total = u16::try_from(total).map_err(|_| FragmentError::TooManyFragments {
        size,
        mtu: mtu_payload,
    })?;
    Ok((0..total)
        .map(|i| {
            let start = usize::from(i) * mtu_payload;
            let end = (start + mtu_payload).min(size);
            let mut p = Packet::data(
                instance,
                seq,
                update.gen_timestamp,
                update.payload.slice(start..end),
            );
            p.kind = PacketKind::Frag;
            p.frag_index = i;
            p.frag_total = total;
            p
        })
        .collect())
}

/// `a` is newer than `b` in 32-bit serial-number arithmetic.
pub fn seq_newer(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) > 0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assembled {
    Complete {
        seq: u32,
        gen_timestamp: Timestamp,
        payload: Bytes,
    },
    Pending {
        received: u16,
        total: u16,
    },
    /// Already have this piece, or the update was already completed.
    Duplicate,
    /// Belongs to an update older than one already seen.
    Stale,
}

#[derive(Debug, Clone)]
struct Partial {
    seq: u32,
    gen_timestamp: Timestamp,
    pieces: Vec<Option<Bytes>>,
    received: u16,
}

/// Reassembly state for one instance. A fragment of a newer `seq` discards
/// whatever was pending for an older one.
#[derive(Debug, Clone, Default)]
pub struct Reassembler {
    partial: Option<Partial>,
    last_complete: Option<u32>,
    superseded: u64,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Partial updates dropped because a newer one started.
    pub fn superseded_count(&self) -> u64 {
        self.superseded
    }

    pub fn pending(&self) -> Option<(u32, u16, u16)> {
        self.partial
            .as_ref()
            .map(|p| (p.seq, p.received, p.pieces.len() as u16))
    }

    fn is_stale(&self, seq: u32) -> bool {
        self.last_complete.is_some_and(|done| !seq_newer(seq, done))
    }

    pub fn accept(&mut self, packet: &Packet) -> Assembled {
        let seq = packet.seq;
        if self.last_complete == Some(seq) {
            return Assembled::Duplicate;
        }
        if self.is_stale(seq) {
            return Assembled::Stale;
        }
        match packet.kind {
            PacketKind::Data => {
                if self.partial.take().is_some() {
                    self.superseded += 1;
                }
                self.last_complete = Some(seq);
                Assembled::Complete {
                    seq,
                    gen_timestamp: packet.gen_timestamp,
                    payload: packet.payload.clone(),
                }
            }
            PacketKind::Frag => self.accept_fragment(packet),
            _ => Assembled::Stale,
        }
    }

    fn accept_fragment(&mut self, packet: &Packet) -> Assembled {
        let seq = packet.seq;
        let total = usize::from(packet.frag_total);
        match &self.partial {
            Some(p) if p.seq == seq => {
                if p.pieces.len() != total || p.gen_timestamp != packet.gen_timestamp {
                    return Assembled::Stale;
                }
            }
            Some(p) if !seq_newer(seq, p.seq) => return Assembled::Stale,
            other => {
                if other.is_some() {
                    self.superseded += 1;
                }
                self.partial = Some(Partial {
                    seq,
                    gen_timestamp: packet.gen_timestamp,
                    pieces: vec![None; total],
                    received: 0,
                });
            }
        }
        let partial = self.partial.as_mut().expect("partial present");
        let slot = &mut partial.pieces[usize::from(packet.frag_index)];
        if slot.is_some() {
            return Assembled::Duplicate;
        }
        *slot = Some(packet.payload.clone());
        partial.received += 1;
        if usize::from(partial.received) < total {
            return Assembled::Pending {
                received: partial.received,
                total: packet.frag_total,
            };
        }
        let done = self.partial.take().expect("partial present");
        let mut buf = BytesMut::with_capacity(done.pieces.iter().flatten().map(Bytes::len).sum());
        for piece in done.pieces.into_iter().flatten() {
            buf.extend_from_slice(&piece);
        }
        self.last_complete = Some(done.seq);
        Assembled::Complete {
            seq: done.seq,
            gen_timestamp: done.gen_timestamp,
            payload: buf.freeze(),
        }
    }
}
