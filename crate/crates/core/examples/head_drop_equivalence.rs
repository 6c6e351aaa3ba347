//! A single-slot head-drop queue and an unbounded newest-first stack give the
//! receiver exactly the same age process when every service opportunity
//! delivers instantly.
//!
//! Run with `cargo run --example head_drop_equivalence`.

use std::cell::RefCell;

use freshnet::queueing::{Lcfs1Queue, LcfsStack};
use freshnet::sim::mm1::age_path;
use freshnet::Timestamp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorted_times(rng: &mut ChaCha8Rng, n: usize, span: u64) -> Vec<Timestamp> {
    let mut v: Vec<Timestamp> = (0..n)
        .map(|_| Timestamp(rng.random_range(0..span)))
        .collect();
    v.sort();
    v
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let traces = 1000;
    let mut points = 0;
    for _ in 0..traces {
        let (na, no) = (rng.random_range(0..200), rng.random_range(0..200));
        let arrivals = sorted_times(&mut rng, na, 1_000_000);
        let opportunities = sorted_times(&mut rng, no, 1_000_000);

        let slot = RefCell::new(Lcfs1Queue::new());
        let a = age_path(
            &arrivals,
            &opportunities,
            |g| {
                slot.borrow_mut().push(g);
            },
            || slot.borrow_mut().take(),
        )
        .unwrap();
        let stack = RefCell::new(LcfsStack::new());
        let b = age_path(
            &arrivals,
            &opportunities,
            |g| stack.borrow_mut().push(g),
            || stack.borrow_mut().pop(),
        )
        .unwrap();
        assert_eq!(a, b, "age paths diverged");
        points += a.len();
    }
    println!("{traces} random traces, {points} sample points: identical age paths");
}
