use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::Duration;

use freshnet::analyze::{analyze_deliveries, load_log, Log};
use freshnet::harness::DestinationSummary;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_freshnet"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_is_deterministic() {
    let cfg = config("single_source.toml");
    let cfg = cfg.to_str().unwrap();
    let a = run(&["simulate", "--config", cfg, "--seed", "7"]);
    let b = run(&["simulate", "--config", cfg, "--seed", "7"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 2);
    let c = run(&["simulate", "--config", cfg, "--seed", "8"]);
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn sweep_gives_one_row_per_grid_point() {
    let o = run(&[
        "sweep",
        "--axis",
        "lambda",
        "--grid",
        "100,250,500,750,1000,2000,5000",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 8);
}

#[test]
fn analyze_reproduces_simulator_naoi() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep",
        "--axis",
        "n",
        "--grid",
        "2,4,6,8",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let Log::Metrics(rows) = load_log(&out).unwrap() else {
        panic!("wrong schema")
    };
    assert_eq!(rows.len(), 8);
    let a = run(&["analyze", out.to_str().unwrap()]);
    let text = stdout(&a);
    assert!(text.contains("least-squares fit"), "{text}");
    // per configuration the mean of the two seeds
    for n in [2u16, 4, 6, 8] {
        let runs: Vec<f64> = rows
            .iter()
            .filter(|r| r.n_sources == n)
            .map(|r| r.naoi_s)
            .collect();
        let mean = (runs[0] + runs[1]) / 2.0;
        let line = text
            .lines()
            .find(|l| l.split(',').nth(4) == Some(&n.to_string()) && l.contains("polling"))
            .unwrap();
        let reported: f64 = line.split(',').nth(7).unwrap().parse().unwrap();
        assert!(
            (reported - mean).abs() <= 1e-15 * mean.max(1.0),
            "{reported} vs {mean}"
        );
    }
}

#[test]
fn config_errors_exit_2_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("single_source.toml")).unwrap();
    std::fs::write(
        &bad,
        text.replace("n_sources = 1", "n_sources = 1\ncolour = 3"),
    )
    .unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:") && err.contains("colour"), "{err}");

    std::fs::write(&bad, text.replace("horizon_s = 10.0", "horizon_s = 0.0")).unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(
        run(&["sweep", "--axis", "n", "--grid", "1.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_3() {
    let taken = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = run(&["serve-destination", "--bind", &addr, "--duration", "1"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn shipped_configs_parse() {
    for name in [
        "single_source.toml",
        "saturated_polling.toml",
        "heterogeneous_links.toml",
        "random_access.toml",
    ] {
        let path = config(name);
        let f = freshnet::experiment::ExperimentFile::load(&path).unwrap();
        assert!(f.hash_mismatch().is_none(), "{name}");
    }
    for name in ["destination.toml", "source.toml"] {
        let f = freshnet::experiment::ExperimentFile::load(&config(name)).unwrap();
        assert!(f.hash_mismatch().is_none(), "{name}");
    }
}

#[test]
fn camera_source_against_destination_on_loopback() {
    let port = UdpSocket::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let addr = format!("127.0.0.1:{port}");
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("run.csv");
    let dest = bin()
        .args([
            "serve-destination",
            "--bind",
            &addr,
            "--duration",
            "3",
            "--metrics-out",
            metrics.to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    thread::sleep(Duration::from_millis(200));
    let src = run(&[
        "serve-source",
        "--peer",
        &addr,
        "--source-id",
        "5",
        "--profile",
        "camera",
        "--duration",
        "3",
    ]);
    assert!(
        src.status.success(),
        "{}",
        String::from_utf8_lossy(&src.stderr)
    );
    let out = dest.wait_with_output().unwrap();
    assert!(out.status.success());
    let summary: DestinationSummary = toml::from_str(&stdout(&out)).unwrap();
    assert!(summary.deliveries > 0);
    assert_eq!(summary.corrupt_payloads, 0);

    let Log::Deliveries(records) = load_log(&dir.path().join("run.deliveries.csv")).unwrap() else {
        panic!("wrong schema")
    };
    let recomputed = analyze_deliveries(&records).unwrap();
    let reported = summary.naoi_s.unwrap();
    assert!(
        (recomputed.naoi_s - reported).abs() < 1e-9 * reported,
        "{} vs {reported}",
        recomputed.naoi_s
    );
    let a = run(&[
        "analyze",
        dir.path().join("run.deliveries.csv").to_str().unwrap(),
        metrics.to_str().unwrap(),
    ]);
    assert!(a.status.success());
}
