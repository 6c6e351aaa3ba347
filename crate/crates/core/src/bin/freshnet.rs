//! Command-line entry point. Exit codes: 0 success, 2 config error, 3 runtime failure.

use std::fs::File;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use freshnet::analyze::{self, Log, DEFAULT_REFERENCE};
use freshnet::experiment::{git_describe, Experiment, ExperimentError, ExperimentFile};
use freshnet::harness::{
    run_destination, run_source, HarnessConfig, HarnessError, Role, SensorProfile,
};
use freshnet::queueing::QueueSpec;
use freshnet::scheduling::Policy;
use freshnet::sim::metrics::write_rows;
use freshnet::sim::mm1::rho_grid;
use freshnet::sim::{
    mm1_sweep, sweep, AccessSpec, Discipline, MetricsRow, SimConfig, SimError, SweepAxis,
};

#[derive(Parser)]
#[command(
    name = "freshnet",
    version,
    about = "Age-of-Information simulator, UDP harness and log analysis"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and print its metrics row as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed of the reproducibility block.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_header: bool,
    },
    /// Sweep one parameter of a simulation; one CSV row per point and seed.
    Sweep {
        /// Base experiment; defaults to one saturated polling source.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Repeat the sweep for this many consecutive seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// M/M/1 age curves (oracle and simulation) for FCFS and LCFS, μ = 1.
    Mm1 {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the polling destination; prints a TOML summary on exit.
    ServeDestination(HarnessArgs),
    /// Run a sensor source; prints a TOML summary on exit.
    ServeSource(HarnessArgs),
    /// Summarize metrics CSVs, delivery logs or M/M/1 tables.
    Analyze {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Scheme the ratio table divides by, as access/policy/queue.
        #[arg(long, default_value = DEFAULT_REFERENCE)]
        reference: String,
        #[arg(long)]
        tsv: bool,
    },
    /// Print an annotated experiment file to start from.
    Template {
        #[arg(value_enum)]
        kind: TemplateKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Lambda,
    N,
    Capacity,
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateKind {
    Sim,
    RandomAccess,
    Destination,
    Source,
}

#[derive(clap::Args)]
struct HarnessArgs {
    /// Experiment file with a [harness] table; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Must agree with the subcommand when given.
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
    #[arg(long)]
    bind: Option<SocketAddr>,
    #[arg(long)]
    peer: Option<SocketAddr>,
    #[arg(long)]
    source_id: Option<u16>,
    /// Sensor profiles (gps, imu, camera); repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    profile: Vec<SensorProfile>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    mtu: Option<usize>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policy: Option<Policy>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum RoleArg {
    Destination,
    Source,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        // an unreadable config file is still a config problem
        Failure::Config(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::EmptyGrid => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(path: &Path) -> Result<ExperimentFile, Failure> {
    let file = ExperimentFile::load(path)?;
    if let Some((stored, computed)) = file.hash_mismatch() {
        log::warn!(
            "{}: config_hash {stored} is stale, tables hash to {computed}",
            path.display()
        );
    }
    Ok(file)
}

fn load_sim(path: &Path) -> Result<SimConfig, Failure> {
    match load(path)?.experiment {
        Experiment::Sim(c) => Ok(c),
        Experiment::Harness(_) => Err(Failure::Config(format!(
            "{}: expected a [sim] table",
            path.display()
        ))),
    }
}

fn default_sweep_base() -> SimConfig {
    SimConfig::saturated(
        1,
        1000.0,
        AccessSpec::polling(Policy::Mw),
        QueueSpec::Lcfs1,
        10.0,
    )
}

fn axis(axis: Axis, grid: &[f64]) -> Result<SweepAxis, Failure> {
    let ints = |what: &str| -> Result<Vec<u64>, Failure> {
        grid.iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as u64)
                } else {
                    Err(Failure::Config(format!(
                        "--grid: {what} values must be positive integers, got {v}"
                    )))
                }
            })
            .collect()
    };
    Ok(match axis {
        Axis::Lambda => SweepAxis::Lambda(grid.to_vec()),
        Axis::N => SweepAxis::N(
            ints("n")?
                .into_iter()
                .map(|v| {
                    u16::try_from(v)
                        .map_err(|_| Failure::Config(format!("--grid: n = {v} is too large")))
                })
                .collect::<Result<_, _>>()?,
        ),
        Axis::Capacity => {
            SweepAxis::Capacity(ints("capacity")?.into_iter().map(|v| v as usize).collect())
        }
    })
}

fn harness_config(args: HarnessArgs, role: Role) -> Result<HarnessConfig, Failure> {
    if let Some(r) = args.role {
        let want = if role == Role::Destination {
            RoleArg::Destination
        } else {
            RoleArg::Source
        };
        if r != want {
            return Err(Failure::Config("--role contradicts the subcommand".into()));
        }
    }
    let mut cfg = match &args.config {
        Some(path) => match load(path)?.experiment {
            Experiment::Harness(c) if c.role == role => c,
            _ => {
                return Err(Failure::Config(format!(
                    "{}: expected a [harness] table for this role",
                    path.display()
                )))
            }
        },
        None => match role {
            Role::Destination => {
                HarnessConfig::destination("127.0.0.1:7070".parse().expect("literal"), 60.0)
            }
            Role::Source => {
                let peer = args
                    .peer
                    .ok_or_else(|| Failure::Config("--peer is required without --config".into()))?;
                HarnessConfig::source(peer, 0, Vec::new(), 60.0)
            }
        },
    };
    if let Some(v) = args.bind {
        cfg.bind = v;
    }
    if let Some(v) = args.peer {
        cfg.peer = Some(v);
    }
    if let Some(v) = args.source_id {
        cfg.source_id = v;
    }
    if !args.profile.is_empty() {
        cfg.profiles = args.profile;
    }
    if let Some(v) = args.duration {
        cfg.duration_s = v;
    }
    if let Some(v) = args.timeout_ms {
        cfg.timeout_ms = v;
    }
    if let Some(v) = args.mtu {
        cfg.mtu_payload = v;
    }
    if let Some(v) = args.metrics_out {
        cfg.metrics_path = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.policy {
        cfg.policy = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_toml<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = toml::to_string(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    print!("{text}");
    Ok(())
}

fn template(kind: TemplateKind) -> ExperimentFile {
    let experiment = match kind {
        TemplateKind::Sim => Experiment::Sim(default_sweep_base()),
        TemplateKind::RandomAccess => Experiment::Sim(SimConfig::saturated(
            10,
            10_000.0,
            AccessSpec::random_access(),
            QueueSpec::default(),
            60.0,
        )),
        TemplateKind::Destination => Experiment::Harness(HarnessConfig::destination(
            "127.0.0.1:7070".parse().expect("literal"),
            60.0,
        )),
        TemplateKind::Source => Experiment::Harness(HarnessConfig::source(
            "127.0.0.1:7070".parse().expect("literal"),
            1,
            SensorProfile::ALL.to_vec(),
            60.0,
        )),
    };
    let mut f = ExperimentFile::new(experiment, 1);
    f.reproducibility.git_describe = git_describe().unwrap_or_default();
    f
}

fn table<T: serde::Serialize>(
    out: &mut impl Write,
    delim: u8,
    title: &str,
    rows: &[T],
) -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delim)
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(out, "# {title}")?;
    out.write_all(&bytes)?;
    writeln!(out)?;
    Ok(())
}

fn analyze_logs(paths: &[PathBuf], reference: &str, tsv: bool) -> Result<(), Failure> {
    let mut metrics: Vec<MetricsRow> = Vec::new();
    let mut out = io::stdout().lock();
    let delim = if tsv { b'\t' } else { b',' };
    for path in paths {
        match analyze::load_log(path).map_err(|e| match e {
            analyze::AnalyzeError::Io { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Config(e.to_string()),
        })? {
            Log::Metrics(r) => metrics.extend(r),
            Log::Deliveries(recs) => {
                let a = analyze::analyze_deliveries(&recs)
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
                #[derive(serde::Serialize)]
                struct Row<'a> {
                    log: &'a str,
                    source_id: u16,
                    info_type: u8,
                    average_age_s: f64,
                }
                let name = path.display().to_string();
                let per: Vec<Row> = a
                    .per_instance
                    .iter()
                    .map(|(id, age)| Row {
                        log: &name,
                        source_id: id.source,
                        info_type: id.info_type,
                        average_age_s: *age,
                    })
                    .collect();
                table(&mut out, delim, &format!("delivery log {name}: naoi_s={:.6} deliveries={} corrupt={} throughput_bps={:.1}", a.naoi_s, a.deliveries, a.corrupt, a.throughput_bps), &per)?;
            }
            Log::Mm1(points) => {
                table(
                    &mut out,
                    delim,
                    &format!("m/m/1 curves {}", path.display()),
                    &points,
                )?;
                for d in [Discipline::Fcfs, Discipline::Lcfs] {
                    if let Some(m) = analyze::mm1_minimizer(&points, d) {
                        writeln!(
                            out,
                            "# {d:?} minimum: rho={:.2} age_s={:.4}\n",
                            m.rho, m.simulated_s
                        )?;
                    }
                }
            }
        }
    }
    if !metrics.is_empty() {
        let groups = analyze::summarize(&analyze::final_rows(&metrics));
        table(
            &mut out,
            delim,
            "naoi per configuration (mean and sample std across seeds)",
            &groups,
        )?;
        let ratios = analyze::ratio_table(&groups, reference);
        if !ratios.is_empty() {
            table(
                &mut out,
                delim,
                &format!("naoi ratio to {reference}"),
                &ratios,
            )?;
        }
        let fits = analyze::n_scaling(&groups);
        if !fits.is_empty() {
            table(
                &mut out,
                delim,
                "least-squares fit of naoi against n_sources",
                &fits,
            )?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Simulate {
            config,
            seed,
            out,
            no_header,
        } => {
            let mut cfg = load_sim(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let log = freshnet::sim::run(&cfg)?;
            write_rows(output(out.as_deref())?, &[log.row()], !no_header)?;
        }
        Cmd::Sweep {
            config,
            axis: a,
            grid,
            seed,
            seeds,
            out,
        } => {
            let mut base = match &config {
                Some(p) => load_sim(p)?,
                None => default_sweep_base(),
            };
            if let Some(s) = seed {
                base.seed = s;
            }
            let axis = axis(a, &grid)?;
            let mut all = Vec::new();
            for k in 0..seeds.max(1) {
                let mut b = base.clone();
                b.seed = base.seed.wrapping_add(k << 32);
                for p in sweep(&b, &axis)? {
                    all.push(p.result?.row());
                }
            }
            write_rows(output(out.as_deref())?, &all, true)?;
        }
        Cmd::Mm1 { seed, out } => {
            let points =
                mm1_sweep(&rho_grid(), seed).map_err(|e| Failure::Runtime(e.to_string()))?;
            analyze::write_csv(output(out.as_deref())?, &points)?;
        }
        Cmd::ServeDestination(args) => {
            let cfg = harness_config(args, Role::Destination)?;
            print_toml(&run_destination(&cfg)?)?;
        }
        Cmd::ServeSource(args) => {
            let cfg = harness_config(args, Role::Source)?;
            print_toml(&run_source(&cfg)?)?;
        }
        Cmd::Analyze {
            logs,
            reference,
            tsv,
        } => analyze_logs(&logs, &reference, tsv)?,
        Cmd::Template { kind } => print!("{}", template(kind).render()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
