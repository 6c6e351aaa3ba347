//! Byte-exact packet layout. All multi-byte fields are big-endian.
//!
//! ```text
//! off len field
//!   0   1 version (0x01)
//!   1   1 kind
//!   2   2 source_id
//!   4   1 info_type
//!   5   4 seq
//!   9   2 frag_index
//!  11   2 frag_total
//!  13   8 gen_timestamp (µs)
//!  21  24 aux_timestamps[3] (sync only)
//!  45   2 payload_len
//!  47   n payload
//! ```

use bytes::{Buf, BufMut, Bytes, BytesMut};
use thiserror::Error;

use crate::instance::InstanceId;
use crate::time::Timestamp;

pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 47;
/// Largest UDP payload over IPv4.
pub const MAX_FRAME_LEN: usize = 65_507;
pub const MAX_PAYLOAD: usize = MAX_FRAME_LEN - HEADER_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PacketKind {
    Poll = 0x01,
    Data = 0x02,
    Empty = 0x03,
    Frag = 0x04,
    SyncReq = 0x05,
    SyncResp = 0x06,
}

impl PacketKind {
    pub const ALL: [PacketKind; 6] = [
        PacketKind::Poll,
        PacketKind::Data,
        PacketKind::Empty,
        PacketKind::Frag,
        PacketKind::SyncReq,
        PacketKind::SyncResp,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        PacketKind::ALL.into_iter().find(|k| *k as u8 == b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("frame of {0} bytes is shorter than the {HEADER_LEN}-byte header")]
    Truncated(usize),
    #[error("version: expected {VERSION:#04x}, got {0:#04x}")]
    BadVersion(u8),
    #[error("kind: unknown value {0:#04x}")]
    UnknownKind(u8),
    #[error("payload_len: header declares {declared} bytes but {actual} follow")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("{field}: {reason}")]
    InvalidField {
        field: &'static str,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct EncodeError {
    pub field: &'static str,
    pub reason: &'static str,
}

/// One protocol message.
///
/// Field use per kind:
/// - `Poll`: `seq`/`frag_index`/`frag_total` acknowledge the last fragment
///   received from the polled instance; all three zero means nothing to ack.
/// - `Data`: a complete update, `frag_index = 0`, `frag_total = 1`.
/// - `Frag`: one piece of an update, `frag_index < frag_total`, `frag_total ≥ 2`.
/// - `Empty`: the polled queue was empty; header only.
/// - `SyncReq`/`SyncResp`: `aux` carries the on-wire timestamps T1..T3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub kind: PacketKind,
    pub source_id: u16,
    pub info_type: u8,
    pub seq: u32,
    pub frag_index: u16,
    pub frag_total: u16,
    pub gen_timestamp: Timestamp,
    pub aux: [u64; 3],
    pub payload: Bytes,
}

impl Packet {
    fn header(kind: PacketKind, instance: InstanceId) -> Packet {
        Packet {
            kind,
            source_id: instance.source,
            info_type: instance.info_type,
            seq: 0,
            frag_index: 0,
            frag_total: 0,
            gen_timestamp: Timestamp::ZERO,
            aux: [0; 3],
            payload: Bytes::new(),
        }
    }

    /// A poll acknowledging fragment `ack = (seq, index, total)`, if any.
    pub fn poll(instance: InstanceId, ack: Option<FragAck>) -> Packet {
        let mut p = Packet::header(PacketKind::Poll, instance);
        if let Some(ack) = ack {
            p.seq = ack.seq;
            p.frag_index = ack.index;
            p.frag_total = ack.total;
        }
        p
    }

    pub fn empty(instance: InstanceId) -> Packet {
        Packet::header(PacketKind::Empty, instance)
    }

    pub fn data(
        instance: InstanceId,
        seq: u32,
        gen_timestamp: Timestamp,
        payload: Bytes,
    ) -> Packet {
        Packet {
            seq,
            frag_total: 1,
            gen_timestamp,
            payload,
            ..Packet::header(PacketKind::Data, instance)
        }
    }

    pub fn sync_request(instance: InstanceId, exchange: u32, t1: Timestamp) -> Packet {
        Packet {
            seq: exchange,
            aux: [t1.0, 0, 0],
            ..Packet::header(PacketKind::SyncReq, instance)
        }
    }

    pub fn sync_response(request: &Packet, t2: Timestamp, t3: Timestamp) -> Packet {
        Packet {
            seq: request.seq,
            aux: [request.aux[0], t2.0, t3.0],
            ..Packet::header(PacketKind::SyncResp, request.instance())
        }
    }

    pub fn instance(&self) -> InstanceId {
        InstanceId::new(self.source_id, self.info_type)
    }

    /// The acknowledgement carried by a poll.
    pub fn frag_ack(&self) -> Option<FragAck> {
        (self.kind == PacketKind::Poll && self.frag_total > 0).then_some(FragAck {
            seq: self.seq,
            index: self.frag_index,
            total: self.frag_total,
        })
    }

    /// Which fragment this data-bearing packet is.
    pub fn as_ack(&self) -> Option<FragAck> {
        matches!(self.kind, PacketKind::Data | PacketKind::Frag).then_some(FragAck {
            seq: self.seq,
            index: self.frag_index,
            total: self.frag_total,
        })
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn validate(&self) -> Result<(), (&'static str, &'static str)> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(("payload_len", "exceeds maximum datagram payload"));
        }
        let header_only = self.payload.is_empty();
        let no_aux = self.aux == [0; 3];
        let no_frag = self.frag_index == 0 && self.frag_total == 0;
        match self.kind {
            PacketKind::Poll => {
                if !header_only {
                    return Err(("payload_len", "poll carries no payload"));
                }
                if !no_frag && self.frag_index >= self.frag_total {
                    return Err(("frag_index", "ack index must be below ack total"));
                }
                if no_frag && self.seq != 0 {
                    return Err(("seq", "poll without ack must have seq 0"));
                }
                if !no_aux || self.gen_timestamp != Timestamp::ZERO {
                    return Err(("aux_timestamps", "unused fields must be zero"));
                }
            }
            PacketKind::Data => {
                if self.frag_index != 0 || self.frag_total != 1 {
                    return Err(("frag_total", "data packets are 0 of 1"));
                }
                if !no_aux {
                    return Err(("aux_timestamps", "unused fields must be zero"));
                }
            }
            PacketKind::Frag => {
                if self.frag_total < 2 {
                    return Err(("frag_total", "fragmented updates have at least two pieces"));
                }
                if self.frag_index >= self.frag_total {
                    return Err(("frag_index", "must be below frag_total"));
                }
                if header_only {
                    return Err(("payload_len", "fragments are never empty"));
                }
                if !no_aux {
                    return Err(("aux_timestamps", "unused fields must be zero"));
                }
            }
            PacketKind::Empty => {
                if !header_only
                    || !no_frag
                    || !no_aux
                    || self.seq != 0
                    || self.gen_timestamp != Timestamp::ZERO
                {
                    return Err(("kind", "empty packets are header-only with zero fields"));
                }
            }
            PacketKind::SyncReq | PacketKind::SyncResp => {
                if !header_only || !no_frag || self.gen_timestamp != Timestamp::ZERO {
                    return Err(("kind", "sync packets carry only aux timestamps"));
                }
                if self.kind == PacketKind::SyncReq && (self.aux[1] != 0 || self.aux[2] != 0) {
                    return Err(("aux_timestamps", "requests carry T1 only"));
                }
            }
        }
        Ok(())
    }

    pub fn encode_into(&self, buf: &mut BytesMut) -> Result<(), EncodeError> {
        self.validate()
            .map_err(|(field, reason)| EncodeError { field, reason })?;
        buf.reserve(self.encoded_len());
        buf.put_u8(VERSION);
        buf.put_u8(self.kind as u8);
        buf.put_u16(self.source_id);
        buf.put_u8(self.info_type);
        buf.put_u32(self.seq);
        buf.put_u16(self.frag_index);
        buf.put_u16(self.frag_total);
        buf.put_u64(self.gen_timestamp.0);
        for a in self.aux {
            buf.put_u64(a);
        }
        buf.put_u16(self.payload.len() as u16);
        buf.put_slice(&self.payload);
        Ok(())
    }

    pub fn encode(&self) -> Result<Bytes, EncodeError> {
        let mut buf = BytesMut::with_capacity(self.encoded_len());
        self.encode_into(&mut buf)?;
        Ok(buf.freeze())
    }

    pub fn decode(frame: &[u8]) -> Result<Packet, DecodeError> {
        if frame.len() < HEADER_LEN {
            return Err(DecodeError::Truncated(frame.len()));
        }
        let mut b = frame;
        let version = b.get_u8();
        if version != VERSION {
            return Err(DecodeError::BadVersion(version));
        }
        let kind_byte = b.get_u8();
        let kind = PacketKind::from_byte(kind_byte).ok_or(DecodeError::UnknownKind(kind_byte))?;
        let source_id = b.get_u16();
        let info_type = b.get_u8();
        let seq = b.get_u32();
        let frag_index = b.get_u16();
        let frag_total = b.get_u16();
        let gen_timestamp = Timestamp(b.get_u64());
        let aux = [b.get_u64(), b.get_u64(), b.get_u64()];
        let declared = usize::from(b.get_u16());
        if b.remaining() != declared {
            return Err(DecodeError::LengthMismatch {
                declared,
                actual: b.remaining(),
            });
        }
        let packet = Packet {
            kind,
            source_id,
            info_type,
            seq,
            frag_index,
            frag_total,
            gen_timestamp,
            aux,
            payload: Bytes::copy_from_slice(b),
        };
        packet
            .validate()
            .map_err(|(field, reason)| DecodeError::InvalidField { field, reason })?;
        Ok(packet)
    }
}

/// Identifies one received fragment of one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FragAck {
    pub seq: u32,
    pub index: u16,
    pub total: u16,
}

impl FragAck {
    pub fn is_final(&self) -> bool {
        self.index + 1 == self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poll_is_header_only() {
        let p = Packet::poll(
            InstanceId::new(3, 1),
            Some(FragAck {
                seq: 7,
                index: 2,
                total: 14,
            }),
        );
        let bytes = p.encode().unwrap();
        assert_eq!(bytes.len(), 47);
        // hand-assembled frame
        let mut expected = vec![0x01, 0x01, 0x00, 0x03, 0x01, 0, 0, 0, 7, 0, 2, 0, 14];
        expected.extend([0u8; 8 + 24]);
        expected.extend([0, 0]);
        assert_eq!(&bytes[..], &expected[..]);
        assert_eq!(Packet::decode(&bytes).unwrap(), p);
    }

    #[test]
    fn data_frame_length() {
        let p = Packet::data(
            InstanceId::new(1, 0),
            9,
            Timestamp(123),
            Bytes::from(vec![0xAB; 150]),
        );
        let bytes = p.encode().unwrap();
        assert_eq!(bytes.len(), 197);
        assert_eq!(&bytes[45..47], &[0, 150]);
        assert_eq!(Packet::decode(&bytes).unwrap(), p);
    }

    #[test]
    fn decode_errors_name_the_field() {
        let good = Packet::empty(InstanceId::new(1, 1))
            .encode()
            .unwrap()
            .to_vec();
        assert_eq!(Packet::decode(&good[..20]), Err(DecodeError::Truncated(20)));

        let mut bad = good.clone();
        bad[0] = 2;
        assert_eq!(Packet::decode(&bad), Err(DecodeError::BadVersion(2)));

        let mut bad = good.clone();
        bad[1] = 0x7f;
        assert_eq!(Packet::decode(&bad), Err(DecodeError::UnknownKind(0x7f)));

        let mut bad = good.clone();
        bad.push(0);
        assert_eq!(
            Packet::decode(&bad),
            Err(DecodeError::LengthMismatch {
                declared: 0,
                actual: 1
            })
        );

        let mut bad = good;
        bad[1] = PacketKind::Frag as u8;
        assert!(matches!(
            Packet::decode(&bad),
            Err(DecodeError::InvalidField {
                field: "frag_total",
                ..
            })
        ));
    }

    #[test]
    fn encode_rejects_invalid_packets() {
        let mut p = Packet::data(
            InstanceId::new(0, 0),
            0,
            Timestamp(1),
            Bytes::from_static(b"x"),
        );
        p.frag_total = 3;
        assert!(p.encode().is_err());
        let mut p = Packet::poll(InstanceId::new(0, 0), None);
        p.payload = Bytes::from_static(b"x");
        assert_eq!(p.encode().unwrap_err().field, "payload_len");
    }

    #[test]
    fn sync_round_trip() {
        let req = Packet::sync_request(InstanceId::new(4, 0), 2, Timestamp(1000));
        let resp = Packet::sync_response(&req, Timestamp(1500), Timestamp(1600));
        assert_eq!(resp.aux, [1000, 1500, 1600]);
        assert_eq!(Packet::decode(&resp.encode().unwrap()).unwrap(), resp);
    }
}
