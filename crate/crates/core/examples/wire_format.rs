//! Encode each packet kind, show its bytes, and decode it back.
//!
//! Run with `cargo run --example wire_format`.

use bytes::Bytes;
use freshnet::protocol::wire::FragAck;
use freshnet::protocol::{Packet, HEADER_LEN};
use freshnet::{InstanceId, Timestamp};

fn main() {
    let id = InstanceId::new(0x0102, 3);
    let packets = [
        Packet::poll(id, None),
        Packet::poll(
            id,
            Some(FragAck {
                seq: 9,
                index: 2,
                total: 14,
            }),
        ),
        Packet::data(id, 9, Timestamp(1_234_567), Bytes::from_static(b"hello")),
        Packet::empty(id),
        Packet::sync_request(id, 1, Timestamp(42)),
    ];
    println!("header is {HEADER_LEN} bytes");
    for p in packets {
        let bytes = p.encode().unwrap();
        println!(
            "{:?} ({} B)\n  {}",
            p.kind,
            bytes.len(),
            hex::encode(&bytes)
        );
        assert_eq!(Packet::decode(&bytes).unwrap(), p);
    }
    // truncated and corrupted frames are rejected with the offending field
    let good = Packet::empty(id).encode().unwrap();
    println!("truncated: {}", Packet::decode(&good[..20]).unwrap_err());
    let mut bad = good.to_vec();
    bad[1] = 0xEE;
    println!("bad kind:  {}", Packet::decode(&bad).unwrap_err());
}
