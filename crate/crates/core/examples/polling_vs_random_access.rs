//! Saturated sources behind a contention MAC with deep FIFO queues versus the
//! same sources polled with Max-Weight from single-slot LCFS buffers.
//!
//! Run with `cargo run --release --example polling_vs_random_access`.

use freshnet::queueing::QueueSpec;
use freshnet::scheduling::Policy;
use freshnet::sim::{run, AccessSpec, SimConfig};

fn main() {
    let horizon = 30.0;
    println!("n,naoi_random_access_s,naoi_polling_s,ratio");
    for n in [1u16, 4, 8, 12, 16, 20, 24] {
        let ra = SimConfig::saturated(
            n,
            10_000.0,
            AccessSpec::random_access(),
            QueueSpec::default(),
            horizon,
        );
        let poll = SimConfig::saturated(
            n,
            10_000.0,
            AccessSpec::polling(Policy::Mw),
            QueueSpec::Lcfs1,
            horizon,
        );
        let a = run(&ra.with_seed(1)).unwrap().naoi_s;
        let b = run(&poll.with_seed(1)).unwrap().naoi_s;
        println!("{n},{a:.5},{b:.5},{:.1}", a / b);
    }
}
