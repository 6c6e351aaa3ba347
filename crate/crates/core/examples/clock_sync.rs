//! Estimate a remote clock offset from four-timestamp exchanges and keep the
//! exchange with the smallest round-trip delay.
//!
//! Run with `cargo run --example clock_sync`.

use freshnet::protocol::sync::respond;
use freshnet::protocol::{sync_offset, SyncSession};
use freshnet::{InstanceId, Micros, Timestamp};

fn main() {
    // remote clock runs 2.5 s ahead of ours
    let offset = 2_500_000u64;
    let remote = |local: Timestamp| Timestamp(local.0 + offset);

    // symmetric 3 ms paths: exact
    let s = sync_offset(
        Timestamp(0),
        Timestamp(offset + 3_000),
        Timestamp(offset + 3_100),
        Timestamp(6_100),
    )
    .unwrap();
    println!(
        "symmetric: offset {} us, delay {} us",
        s.offset_us, s.delay_us
    );

    // 8 ms out, 2 ms back: off by half the asymmetry
    let s = sync_offset(
        Timestamp(0),
        Timestamp(offset + 8_000),
        Timestamp(offset + 8_000),
        Timestamp(10_000),
    )
    .unwrap();
    println!(
        "asymmetric: offset {} us (error {} us)",
        s.offset_us,
        s.offset_us - offset as f64
    );

    // a session of 8 rounds with jittery one-way delays
    let delays = [
        (9_000, 4_000),
        (1_200, 1_100),
        (5_000, 300),
        (700, 650),
        (3_000, 3_000),
        (900, 2_000),
        (650, 700),
        (4_000, 100),
    ];
    let mut session = SyncSession::new(InstanceId::new(3, 0), delays.len());
    let mut now = Timestamp(10_000);
    for (out, back) in delays {
        let req = session.request(now);
        let t2 = remote(now + Micros(out));
        let resp = respond(&req, t2, t2 + Micros(50)).unwrap();
        now += Micros(out + 50 + back);
        session.on_response(&resp, now);
        now += Micros(1_000);
    }
    let best = session.best().unwrap();
    println!(
        "best of {} rounds: offset {} us (error {} us) at delay {} us",
        session.samples().len(),
        best.offset_us,
        best.offset_us - offset as f64,
        best.delay_us
    );
}
