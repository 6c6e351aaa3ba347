//! Split a camera frame into MTU-sized fragments, lose one in transit, and
//! let the poll acknowledgements drive the retransmission.
//!
//! Run with `cargo run --example fragmentation`.

use bytes::Bytes;
use freshnet::protocol::{
    fragment, Assembled, Packet, Reassembler, SourceEvent, SourceMachine, SourceOptions,
};
use freshnet::queueing::Update;
use freshnet::{InstanceId, Timestamp};

fn main() {
    let frame = Bytes::from((0..19_000u32).map(|i| (i % 251) as u8).collect::<Vec<u8>>());
    let update = Update::new(Timestamp(1_000), 2, frame.clone());

    let pieces = fragment(&update, 7, 1, 1400).unwrap();
    let sizes: Vec<usize> = pieces.iter().map(|p| p.payload.len()).collect();
    println!(
        "19000 B at MTU 1400 -> {} fragments {sizes:?}",
        pieces.len()
    );

    // the same frame through the source automaton, polled until complete
    let id = InstanceId::new(7, 2);
    let mut source = SourceMachine::new(id, SourceOptions::default());
    source.step(SourceEvent::UpdateGenerated(update));
    let mut rx = Reassembler::new();
    let mut ack = None;
    for poll in 1.. {
        let reply = source
            .step(SourceEvent::PollReceived(Packet::poll(id, ack)))
            .expect("polls are answered");
        if poll == 4 {
            println!("poll {poll}: fragment {} lost", reply.frag_index);
            continue; // nothing acknowledged, the source repeats it
        }
        match rx.accept(&reply) {
            Assembled::Complete { payload, .. } => {
                assert_eq!(payload, frame);
                println!(
                    "poll {poll}: frame complete, {} bytes intact",
                    payload.len()
                );
                break;
            }
            _ => ack = reply.as_ack(),
        }
    }
}
