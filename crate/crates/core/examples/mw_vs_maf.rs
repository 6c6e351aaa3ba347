//! Max-Weight against max-age-first and round-robin on unequal links: half
//! the sources deliver 90% of the time, the other half 30%.
//!
//! Run with `cargo run --release --example mw_vs_maf`.

use freshnet::queueing::QueueSpec;
use freshnet::scheduling::Policy;
use freshnet::sim::{run, AccessSpec, ChannelSpec, SimConfig};

fn main() {
    let seeds = 10;
    let mut wins = 0;
    println!("seed,mw_s,maf_s,rr_s");
    for seed in 0..seeds {
        let naoi = |policy| {
            let mut c = SimConfig::saturated(
                10,
                10_000.0,
                AccessSpec::polling(policy),
                QueueSpec::Lcfs1,
                10.0,
            );
            c.channel = ChannelSpec {
                success: vec![0.9, 0.3],
                poll_loss: false,
            };
            run(&c.with_seed(seed)).unwrap().naoi_s
        };
        let (mw, maf, rr) = (naoi(Policy::Mw), naoi(Policy::Maf), naoi(Policy::Rr));
        wins += u32::from(mw <= maf);
        println!("{seed},{mw:.5},{maf:.5},{rr:.5}");
    }
    eprintln!("Max-Weight at least as good as max-age-first in {wins}/{seeds} seeds");
}
