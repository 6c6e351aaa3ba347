//! One destination and three sensor sources over UDP on localhost, each
//! running in its own thread with its own clock origin.
//!
//! Run with `cargo run --release --example loopback_network [seconds]`.

use std::net::UdpSocket;
use std::thread;
use std::time::Duration;

use freshnet::harness::{run_destination, run_source, HarnessConfig, SensorProfile};

fn main() {
    let secs: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5.0);
    let addr = UdpSocket::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let dest =
        thread::spawn(move || run_destination(&HarnessConfig::destination(addr, secs)).unwrap());
    thread::sleep(Duration::from_millis(100));
    let sources: Vec<_> = (1..=3u16)
        .map(|id| {
            let cfg = HarnessConfig::source(addr, id, SensorProfile::ALL.to_vec(), secs + 0.5);
            thread::sleep(Duration::from_millis(37)); // distinct clock origins
            thread::spawn(move || run_source(&cfg).unwrap())
        })
        .collect();
    let summary = dest.join().unwrap();
    for s in sources {
        s.join().unwrap();
    }
    for s in &summary.sync {
        println!(
            "source {}: clock offset {:.0} us, sync delay {} us",
            s.source_id, s.offset_us, s.delay_us
        );
    }
    println!("source,info_type,polls,deliveries,bytes,corrupt,average_age_s");
    for i in &summary.instances {
        println!(
            "{},{},{},{},{},{},{:.4}",
            i.source_id,
            i.info_type,
            i.polls,
            i.deliveries,
            i.delivered_bytes,
            i.corrupt,
            i.average_age_s
        );
    }
    println!(
        "network average age: {:.4} s",
        summary.naoi_s.unwrap_or(f64::NAN)
    );
}
