//! Acceptance suite: every criterion at its stated tolerance, one line each.
//! Runs under `cargo test`; see the README for running it alone.

mod common;

use std::cell::RefCell;
use std::net::UdpSocket;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use freshnet::analyze::{linear_fit, mean_std};
use freshnet::harness::DestinationSummary;
use freshnet::protocol::{fragment, sync_offset, Assembled, Packet, Reassembler};
use freshnet::queueing::{Lcfs1Queue, LcfsStack, QueueSpec, Update};
use freshnet::scheduling::{LinkEvent, Policy, Reception, SourceEstimate};
use freshnet::sim::mm1::{age_path, rho_grid};
use freshnet::sim::polling::run_polling;
use freshnet::sim::{mm1_sweep, run, AccessSpec, ChannelSpec, Discipline, Mm1Point, SimConfig};
use freshnet::{InstanceId, Micros, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mm1_points() -> Vec<Mm1Point> {
    mm1_sweep(&rho_grid(), 1).expect("grid is stable")
}

fn curve(points: &[Mm1Point], d: Discipline) -> Vec<&Mm1Point> {
    let mut v: Vec<_> = points.iter().filter(|p| p.discipline == d).collect();
    v.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    v
}

fn c1_fcfs_curve(points: &[Mm1Point]) -> Verdict {
    let fcfs = curve(points, Discipline::Fcfs);
    let worst = fcfs
        .iter()
        .map(|p| ((p.simulated_s - p.oracle_s) / p.oracle_s).abs())
        .fold(0.0, f64::max);
    let fewest = fcfs.iter().map(|p| p.deliveries).min().unwrap();
    let argmin = fcfs
        .iter()
        .min_by(|a, b| a.simulated_s.total_cmp(&b.simulated_s))
        .unwrap()
        .rho;
    check(
        fcfs.len() == 17 && worst <= 0.02 && fewest >= 1_000_000 && (0.45..=0.60).contains(&argmin),
        format!(
            "max rel err {:.3}%, min deliveries {fewest}, argmin rho {argmin:.2}",
            worst * 100.0
        ),
    )
}

fn c2_lcfs_dominance(points: &[Mm1Point]) -> Verdict {
    let fcfs = curve(points, Discipline::Fcfs);
    let lcfs = curve(points, Discipline::Lcfs);
    let dominated = fcfs
        .iter()
        .zip(&lcfs)
        .filter(|(f, l)| l.simulated_s <= f.simulated_s)
        .count();
    let inversions = lcfs
        .windows(2)
        .filter(|w| w[1].simulated_s > w[0].simulated_s)
        .count();
    let allowed = (0.01 * (lcfs.len() - 1) as f64).floor() as usize;
    check(
        dominated == lcfs.len() && inversions <= allowed,
        format!(
            "LCFS <= FCFS at {dominated}/{} points, {inversions} inversions (allowed {allowed})",
            lcfs.len()
        ),
    )
}

fn c3_head_drop_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut points = 0;
    for trace in 0..1000 {
        let mut draw = |n: usize| {
            let mut v: Vec<Timestamp> = (0..n)
                .map(|_| Timestamp(rng.random_range(0..1_000_000)))
                .collect();
            v.sort();
            v
        };
        let (na, no) = (1 + trace % 300, 1 + (trace * 7) % 300);
        let arrivals = draw(na);
        let opportunities = draw(no);
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
        if a != b {
            return Err(format!("trace {trace}: paths differ"));
        }
        points += a.len();
    }
    Ok(format!("1000 traces, {points} sample points identical"))
}

struct NSweep {
    /// naoi[n-1][seed]
    ra: Vec<Vec<f64>>,
    polling: Vec<Vec<f64>>,
}

const SEEDS: u64 = 10;
const N_MAX: u16 = 24;

fn n_sweep() -> NSweep {
    let jobs: Vec<(u16, u64, bool)> = (1..=N_MAX)
        .flat_map(|n| (0..SEEDS).flat_map(move |s| [(n, s, true), (n, s, false)]))
        .collect();
    let results: Vec<f64> = jobs
        .par_iter()
        .map(|&(n, seed, ra)| {
            let cfg = if ra {
                SimConfig::saturated(
                    n,
                    10_000.0,
                    AccessSpec::random_access(),
                    QueueSpec::default(),
                    60.0,
                )
            } else {
                SimConfig::saturated(
                    n,
                    10_000.0,
                    AccessSpec::polling(Policy::Mw),
                    QueueSpec::Lcfs1,
                    60.0,
                )
            };
            run(&cfg.with_seed(seed)).unwrap().naoi_s
        })
        .collect();
    let mut sweep = NSweep {
        ra: vec![Vec::new(); N_MAX as usize],
        polling: vec![Vec::new(); N_MAX as usize],
    };
    for (&(n, _, ra), naoi) in jobs.iter().zip(results) {
        let row = if ra {
            &mut sweep.ra
        } else {
            &mut sweep.polling
        };
        row[n as usize - 1].push(naoi);
    }
    sweep
}

fn c4_collapse(s: &NSweep) -> Verdict {
    let mean = |v: &Vec<f64>| mean_std(v).0;
    let ratio: Vec<f64> =
        s.ra.iter()
            .zip(&s.polling)
            .map(|(r, p)| mean(r) / mean(p))
            .collect();
    let at20 = ratio[19];
    let increasing = ratio[9..].windows(2).all(|w| w[1] > w[0]);
    let per_seed_monotone = (0..SEEDS as usize)
        .filter(|&k| {
            let r: Vec<f64> = (9..N_MAX as usize)
                .map(|n| s.ra[n][k] / s.polling[n][k])
                .collect();
            r.windows(2).all(|w| w[1] > w[0])
        })
        .count();
    check(
        at20 >= 10.0 && increasing,
        format!(
            "ratio {:.0} at N=10, {at20:.0} at N=20, {:.0} at N=24; seed-mean increasing for N>=10: {increasing}; \
             per-seed increasing in {per_seed_monotone}/{SEEDS}",
            ratio[9], ratio[23]
        ),
    )
}

fn c5_linear(s: &NSweep) -> Verdict {
    let pts: Vec<(f64, f64)> = s
        .polling
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64, mean_std(v).0))
        .collect();
    let fit = linear_fit(&pts).unwrap();
    let ratio = pts[23].1 / pts[11].1;
    check(
        fit.r2 >= 0.98 && (1.7..=2.3).contains(&ratio),
        format!(
            "R^2 {:.4}, slope {:.3} ms/source, NAoI(24)/NAoI(12) {ratio:.3}",
            fit.r2,
            fit.slope * 1e3
        ),
    )
}

fn c6_mw_vs_maf() -> Verdict {
    let results: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
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
            (naoi(Policy::Mw), naoi(Policy::Maf))
        })
        .collect();
    let wins = results.iter().filter(|(mw, maf)| mw <= maf).count();
    let mw = mean_std(&results.iter().map(|r| r.0).collect::<Vec<_>>()).0;
    let maf = mean_std(&results.iter().map(|r| r.1).collect::<Vec<_>>()).0;
    check(
        wins >= 19,
        format!(
            "MW <= MAF in {wins}/20 seeds (mean {:.3} vs {:.3} ms)",
            mw * 1e3,
            maf * 1e3
        ),
    )
}

fn us(t: u64) -> Timestamp {
    Timestamp(t)
}

fn c7_estimators() -> Verdict {
    let id = InstanceId::new(0, 0);
    let mut fresh = SourceEstimate::new(id, Timestamp::ZERO);
    if fresh.reliability_estimate(us(1_000_000)) != 1.0 {
        return Err("empty log does not give 1.0".into());
    }
    // Bernoulli convergence: 5000 polls/s for 2 s, well above the 200/s floor
    let mut worst: f64 = 0.0;
    for p in [0.3, 0.7, 0.95] {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut e = SourceEstimate::new(id, Timestamp::ZERO);
            for k in 0..10_000u64 {
                let t = us(k * 200);
                e.reliability_record(LinkEvent::PollSent, t).unwrap();
                if rng.random_bool(p) {
                    e.reliability_record(LinkEvent::DataReceived, t + Micros(100))
                        .unwrap();
                }
            }
            worst = worst.max((e.reliability_estimate(us(2_000_000)) - p).abs());
        }
    }
    if worst > 0.05 {
        return Err(format!("Bernoulli estimate off by {worst:.3}"));
    }
    // head-of-line golden trace: (reception, now) -> (age estimate, hol), µs
    let mut e = SourceEstimate::new(id, Timestamp::ZERO);
    let golden: [(Reception, u64, u64, u64); 6] = [
        (Reception::Data(us(900)), 1_000, 100, 100),
        (Reception::Empty, 5_000, 4_100, 4_100),
        (Reception::Partial(us(4_000)), 6_000, 5_100, 2_000),
        (Reception::Partial(us(100)), 7_000, 6_100, 6_100),
        (Reception::Data(us(4_000)), 8_000, 4_000, 4_000),
        (Reception::Data(us(3_000)), 9_000, 5_000, 5_000),
    ];
    for (i, (r, now, age, hol)) in golden.into_iter().enumerate() {
        e.hol_on_reception(r, us(now));
        let got = (e.age_estimate_micros(us(now)).0, e.hol_estimate_micros().0);
        if got != (age, hol) {
            return Err(format!(
                "golden step {i}: got {got:?}, want {:?}",
                (age, hol)
            ));
        }
    }
    Ok(format!("empty log 1.0; max Bernoulli error {worst:.4} over 60 runs; 6 golden head-of-line steps exact"))
}

fn c8_protocol() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100_000 {
        let p = common::random_packet(&mut rng);
        let bytes = p.encode().map_err(|e| format!("packet {i}: {e}"))?;
        if Packet::decode(&bytes).as_ref() != Ok(&p) {
            return Err(format!("packet {i} does not round-trip"));
        }
    }
    let big: Bytes = (0..65_536u32)
        .map(|i| (i.wrapping_mul(40_503) >> 8) as u8)
        .collect();
    for size in 1..=65_536usize {
        let u = Update::new(Timestamp(7), 1, big.slice(..size));
        let pieces = fragment(&u, 1, 1, 1400).map_err(|e| e.to_string())?;
        let mut rx = Reassembler::new();
        let done: Vec<Bytes> = pieces
            .iter()
            .filter_map(|p| match rx.accept(p) {
                Assembled::Complete { payload, .. } => Some(payload),
                _ => None,
            })
            .collect();
        if done != [u.payload.clone()] {
            return Err(format!("size {size} does not reassemble"));
        }
    }
    let camera = fragment(&Update::new(Timestamp(0), 2, vec![0u8; 19_000]), 1, 1, 1400)
        .unwrap()
        .len();
    if camera != 14 {
        return Err(format!("19000 B gave {camera} fragments"));
    }
    common::random_destination_trace(&mut rng, 100_000)
        .map_err(|e| format!("destination trace: {e}"))?;
    let cfg = common::busy_trace_config(8);
    let (_, trace) = run_polling(&cfg, true).map_err(|e| e.to_string())?;
    let trace = trace.unwrap();
    let polls = common::check_one_outstanding(&trace)?;
    check(
        trace.len() >= 100_000,
        format!(
            "1e5 packets round-trip; sizes 1..65536 reassemble; 19000 B -> 14; one outstanding poll over 1e5 random \
             events and a {}-entry simulator trace ({polls} polls)",
            trace.len()
        ),
    )
}

fn c9_sync() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100_000 {
        let theta: i64 = rng.random_range(-10_000_000_000..10_000_000_000);
        let d: u64 = rng.random_range(0..1_000_000);
        let hold: u64 = rng.random_range(0..100_000);
        let t1 = 20_000_000_000u64;
        let t2 = (t1 as i64 + d as i64 + theta) as u64;
        let s = sync_offset(us(t1), us(t2), us(t2 + hold), us(t1 + 2 * d + hold)).unwrap();
        if (s.offset_us - theta as f64).abs() > 1.0 {
            return Err(format!(
                "symmetric delay {d}: offset {} for {theta}",
                s.offset_us
            ));
        }
    }
    let mut cases = 0;
    for theta in [-3_600_000_000i64, -1, 0, 12_345, 86_400_000_000] {
        for d1 in 0..=100u64 {
            for d2 in 0..=100u64 {
                let (d1, d2) = (d1 * 1000, d2 * 1000);
                let t1 = 100_000_000_000u64;
                let t2 = (t1 as i64 + d1 as i64 + theta) as u64;
                let s = sync_offset(us(t1), us(t2), us(t2 + 250), us(t1 + d1 + 250 + d2)).unwrap();
                let err = s.offset_us - theta as f64;
                if err != (d1 as f64 - d2 as f64) / 2.0 {
                    return Err(format!("d1={d1} d2={d2}: error {err}"));
                }
                cases += 1;
            }
        }
    }
    Ok(format!(
        "1e5 symmetric exchanges within 1 us; {cases} asymmetric cases exact"
    ))
}

fn c10_loopback() -> Verdict {
    let port = UdpSocket::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let addr = format!("127.0.0.1:{port}");
    let exe = env!("CARGO_BIN_EXE_freshnet");
    let dest = Command::new(exe)
        .args(["serve-destination", "--bind", &addr, "--duration", "60"])
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    thread::sleep(Duration::from_millis(300));
    let sources: Vec<_> = (1..=3)
        .map(|id| {
            Command::new(exe)
                .args([
                    "serve-source",
                    "--peer",
                    &addr,
                    "--source-id",
                    &id.to_string(),
                ])
                .args([
                    "--profile",
                    "gps,imu,camera",
                    "--duration",
                    "60.5",
                    "--seed",
                    &id.to_string(),
                ])
                .stdout(Stdio::null())
                .spawn()
                .unwrap()
        })
        .collect();
    let out = dest.wait_with_output().map_err(|e| e.to_string())?;
    for mut s in sources {
        let st = s.wait().map_err(|e| e.to_string())?;
        if !st.success() {
            return Err(format!("source exited with {st}"));
        }
    }
    if !out.status.success() {
        return Err(format!("destination exited with {}", out.status));
    }
    let summary: DestinationSummary =
        toml::from_str(&String::from_utf8_lossy(&out.stdout)).map_err(|e| e.to_string())?;
    let naoi = summary.naoi_s.unwrap_or(f64::NAN);
    let min_polls = summary.instances.iter().map(|i| i.polls).min().unwrap_or(0);
    check(
        summary.instances.len() == 9
            && summary.corrupt_payloads == 0
            && naoi.is_finite()
            && naoi < 2.0
            && min_polls >= 10,
        format!(
            "{} instances, {} deliveries, {} corrupt, NAoI {naoi:.4} s, fewest polls {min_polls}",
            summary.instances.len(),
            summary.deliveries,
            summary.corrupt_payloads
        ),
    )
}

fn main() {
    let mut results: Vec<(u8, &str, Verdict, Duration)> = Vec::new();
    let mut timed = |n: u8, name: &'static str, setup: Duration, f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let v = f();
        results.push((n, name, v, setup + t.elapsed()));
    };
    let t = Instant::now();
    let points = mm1_points();
    let mm1_time = t.elapsed();
    timed(1, "M/M/1 FCFS curve", mm1_time, &|| c1_fcfs_curve(&points));
    timed(2, "LCFS dominance", mm1_time, &|| {
        c2_lcfs_dominance(&points)
    });
    timed(
        3,
        "head-drop equivalence",
        Duration::ZERO,
        &c3_head_drop_equivalence,
    );
    let t = Instant::now();
    let sweep = n_sweep();
    let sweep_time = t.elapsed();
    timed(4, "congestion collapse ordering", sweep_time, &|| {
        c4_collapse(&sweep)
    });
    timed(5, "linear scaling", sweep_time, &|| c5_linear(&sweep));
    // wall-clock bound, so it overlaps the short CPU-bound checks that remain
    let loopback = thread::spawn(|| {
        let t = Instant::now();
        (c10_loopback(), t.elapsed())
    });
    timed(6, "MW vs MAF", Duration::ZERO, &c6_mw_vs_maf);
    timed(7, "estimator suite", Duration::ZERO, &c7_estimators);
    timed(8, "protocol suite", Duration::ZERO, &c8_protocol);
    timed(9, "sync suite", Duration::ZERO, &c9_sync);
    let (v, d) = loopback.join().expect("loopback thread");
    results.push((10, "loopback end-to-end", v, d));

    let mut failed = 0;
    for (n, name, v, d) in &results {
        let (tag, detail) = match v {
            Ok(s) => ("PASS", s),
            Err(s) => {
                failed += 1;
                ("FAIL", s)
            }
        };
        println!(
            "criterion {n:>2} {tag} {name}: {detail} [{:.1} s]",
            d.as_secs_f64()
        );
    }
    println!(
        "(criteria 1-2 share one M/M/1 sweep and 4-5 one N-sweep; times include the shared work)"
    );
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
