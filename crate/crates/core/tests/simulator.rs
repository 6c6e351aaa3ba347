mod common;

use freshnet::queueing::QueueSpec;
use freshnet::scheduling::Policy;
use freshnet::sim::metrics::{read_rows, write_rows};
use freshnet::sim::polling::{replay, run_polling, TraceEntry};
use freshnet::sim::{run, sweep, AccessSpec, ChannelSpec, SimConfig, StreamSpec, SweepAxis};
use proptest::prelude::*;

fn polling(n: u16, lambda: f64) -> SimConfig {
    SimConfig::saturated(
        n,
        lambda,
        AccessSpec::polling(Policy::Mw),
        QueueSpec::Lcfs1,
        2.0,
    )
}

#[test]
fn identical_config_identical_bytes() {
    for cfg in [
        polling(5, 3000.0).with_seed(17),
        SimConfig::saturated(
            6,
            10_000.0,
            AccessSpec::random_access(),
            QueueSpec::default(),
            2.0,
        )
        .with_seed(17),
    ] {
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_rows(&mut x, &[a.row()], true).unwrap();
        write_rows(&mut y, &[b.row()], true).unwrap();
        assert_eq!(x, y);
        assert_eq!(read_rows(&x[..]).unwrap(), vec![a.row()]);
        assert_ne!(run(&cfg.clone().with_seed(18)).unwrap().naoi_s, a.naoi_s);
    }
}

#[test]
fn recorded_trace_replays() {
    let cfg = common::busy_trace_config(2);
    let (log, trace) = run_polling(&cfg, true).unwrap();
    let trace = trace.unwrap();
    assert_eq!(replay(&cfg, &trace), Ok(trace.len()));
    // a doctored output is caught at its own index
    let mut tampered = trace.clone();
    let i = tampered
        .iter()
        .position(|e| {
            matches!(
                e,
                TraceEntry::Source {
                    output: Some(_),
                    ..
                }
            )
        })
        .unwrap();
    if let TraceEntry::Source {
        output: Some(p), ..
    } = &mut tampered[i]
    {
        p.seq = p.seq.wrapping_add(1);
    }
    assert_eq!(replay(&cfg, &tampered), Err(i));
    assert!(log.instances.iter().all(|m| m.is_conserved()));
}

#[test]
fn sweep_points_match_single_runs() {
    let base = polling(2, 500.0).with_seed(9);
    let axis = SweepAxis::Lambda(vec![100.0, 250.0, 500.0, 750.0, 1000.0, 2000.0, 5000.0]);
    let points = sweep(&base, &axis).unwrap();
    assert_eq!(points.len(), 7);
    for p in points {
        assert_eq!(p.result.unwrap(), run(&axis.point(&base, p.index)).unwrap());
    }
}

#[test]
fn lower_reliability_means_older_information() {
    let good = run(&polling(4, 5000.0).with_seed(1)).unwrap().naoi_s;
    let mut lossy = polling(4, 5000.0).with_seed(1);
    lossy.channel = ChannelSpec {
        success: vec![0.5],
        poll_loss: true,
    };
    assert!(run(&lossy).unwrap().naoi_s > good);
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let mut c = polling(0, 100.0);
    c.timing.rate_bps = 0.0;
    let err = run(&c).unwrap_err().to_string();
    assert!(
        err.contains("n_sources") && err.contains("rate_bps"),
        "{err}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_update_is_accounted_for(
        n in 1u16..6,
        rate in 1.0f64..3000.0,
        size in 1usize..6000,
        p in 0.3f64..=1.0,
        poll_loss in any::<bool>(),
        fcfs in any::<bool>(),
        ra in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let queue = if fcfs { QueueSpec::default() } else { QueueSpec::Lcfs1 };
        let access = if ra { AccessSpec::random_access() } else { AccessSpec::polling(Policy::Maf) };
        let mut c = SimConfig::saturated(n, rate, access, queue, 0.5).with_seed(seed);
        c.traffic = vec![StreamSpec::poisson(0, rate, if ra { size.min(1400) } else { size }), StreamSpec::periodic(1, 5.0, 20)];
        c.channel = ChannelSpec { success: vec![p, 1.0], poll_loss };
        let log = run(&c).unwrap();
        for m in &log.instances {
            prop_assert!(m.is_conserved(), "{:?}", m);
            prop_assert!(m.average_age_s.is_finite() && m.average_age_s >= 0.0);
        }
        prop_assert!(log.naoi_s <= 0.5 + 1e-9);
    }
}
