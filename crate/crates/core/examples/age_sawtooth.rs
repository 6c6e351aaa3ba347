//! Track the age of one stream by hand and watch the sawtooth.
//!
//! Run with `cargo run --example age_sawtooth`.

use freshnet::aoi::{naoi, AgeTracker, Delivery};
use freshnet::{InstanceId, Timestamp};

fn t(ms: u64) -> Timestamp {
    Timestamp(ms * 1000)
}

fn main() {
    let mut gps = AgeTracker::new(Timestamp::ZERO);
    // (generated, delivered) in milliseconds; the third one is older than
    // what the receiver already has and does not reset the age
    let deliveries = [(100, 150), (400, 420), (300, 500), (900, 910)];
    for (gen, at) in deliveries {
        let before = gps.age_at(t(at)).unwrap();
        let kind = gps.observe_delivery(t(gen), t(at)).unwrap();
        let after = gps.age_at(t(at)).unwrap();
        let tag = if kind == Delivery::Fresh {
            "fresh"
        } else {
            "stale"
        };
        println!("t={at:>4} ms  gen={gen:>4} ms  {tag}  age {before:.3} s -> {after:.3} s");
    }
    let horizon = t(1000);
    println!(
        "time-average age over 1 s: {:.4} s",
        gps.time_average_age(horizon).unwrap()
    );

    // a second stream that never delivers: its age is just t
    let idle = AgeTracker::new(Timestamp::ZERO);
    let report = naoi(
        [
            (InstanceId::new(1, 0), &gps),
            (InstanceId::new(2, 0), &idle),
        ],
        horizon,
    )
    .unwrap();
    for (id, avg) in &report.per_source_average {
        println!("{id}: {avg:.4} s");
    }
    println!("network average: {:.4} s", report.naoi);
}
