//! Closed-form and simulated age of an M/M/1 queue under FCFS and a
//! single-slot LCFS buffer, μ = 1. Prints a CSV ready for plotting.
//!
//! Run with `cargo run --release --example mm1_age_curves [seed]`.

use freshnet::analyze::mm1_minimizer;
use freshnet::sim::mm1::rho_grid;
use freshnet::sim::{mm1_sweep, Discipline};

fn main() {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let points = mm1_sweep(&rho_grid(), seed).expect("grid is stable");
    println!("rho,discipline,oracle_s,simulated_s,rel_err,deliveries");
    for p in &points {
        let err = (p.simulated_s - p.oracle_s) / p.oracle_s;
        println!(
            "{:.2},{:?},{:.5},{:.5},{:+.4},{}",
            p.rho, p.discipline, p.oracle_s, p.simulated_s, err, p.deliveries
        );
    }
    let best = mm1_minimizer(&points, Discipline::Fcfs).unwrap();
    eprintln!(
        "FCFS age is smallest at rho = {:.2} ({:.3} s)",
        best.rho, best.simulated_s
    );
}
