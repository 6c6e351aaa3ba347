//! Offline analysis of simulator and harness logs.
//!
//! Three CSV schemas are recognized by their header: metrics rows (shared by
//! the simulator and the harness), harness delivery logs, and M/M/1 curves.
//! Everything emitted here is plain tabular data for external plotting.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::aoi::{naoi, AgeTracker, AoiError};
use crate::harness::DeliveryRecord;
use crate::instance::InstanceId;
use crate::protocol::DestinationOptions;
use crate::sim::metrics::{read_rows, CsvError, MetricsRow, CSV_COLUMNS};
use crate::sim::{Discipline, Mm1Point};
use crate::time::Timestamp;

const DELIVERY_COLUMNS: [&str; 8] = [
    "event",
    "source_id",
    "info_type",
    "seq",
    "gen_us",
    "received_us",
    "bytes",
    "intact",
];
const MM1_COLUMNS: [&str; 5] = ["rho", "discipline", "oracle_s", "simulated_s", "deliveries"];

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("{path}: {source}", path = path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}", path = path.display())]
    Schema { path: PathBuf, source: CsvError },
    #[error("{path}: header matches no known log schema (first column `{first}`)", path = path.display())]
    UnknownSchema { path: PathBuf, first: String },
    #[error("delivery log: {0}")]
    Deliveries(String),
    #[error(transparent)]
    Aoi(#[from] AoiError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Log {
    Metrics(Vec<MetricsRow>),
    Deliveries(Vec<DeliveryRecord>),
    Mm1(Vec<Mm1Point>),
}

fn read_typed<T: serde::de::DeserializeOwned, R: Read>(
    input: R,
    columns: &[&str],
) -> Result<Vec<T>, CsvError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    for c in columns {
        if !header.iter().any(|h| h == *c) {
            return Err(CsvError::MissingColumn((*c).to_string()));
        }
    }
    if let Some(extra) = header.iter().find(|h| !columns.contains(h)) {
        return Err(CsvError::UnexpectedColumn(extra.to_string()));
    }
    reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(CsvError::from)
}

/// Reads one log, picking the schema from the first header column.
pub fn load_log(path: &Path) -> Result<Log, AnalyzeError> {
    let io = |source| AnalyzeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut text = String::new();
    BufReader::new(File::open(path).map_err(io)?)
        .read_to_string(&mut text)
        .map_err(io)?;
    let first = text
        .split([',', '\n', '\r'])
        .next()
        .unwrap_or("")
        .trim()
        .to_string();
    let schema = |source| AnalyzeError::Schema {
        path: path.to_path_buf(),
        source,
    };
    if first == CSV_COLUMNS[0] {
        read_rows(text.as_bytes()).map(Log::Metrics).map_err(schema)
    } else if first == DELIVERY_COLUMNS[0] {
        read_typed(text.as_bytes(), &DELIVERY_COLUMNS)
            .map(Log::Deliveries)
            .map_err(schema)
    } else if first == MM1_COLUMNS[0] {
        read_typed(text.as_bytes(), &MM1_COLUMNS)
            .map(Log::Mm1)
            .map_err(schema)
    } else {
        Err(AnalyzeError::UnknownSchema {
            path: path.to_path_buf(),
            first,
        })
    }
}

/// Harness metrics files hold one cumulative row per second; keep only the
/// longest row of each (config, seed) run.
pub fn final_rows(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let mut last: BTreeMap<(String, u64), &MetricsRow> = BTreeMap::new();
    for r in rows {
        let e = last.entry((r.config_hash.clone(), r.seed)).or_insert(r);
        if r.horizon_s >= e.horizon_s {
            *e = r;
        }
    }
    last.into_values().cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub config_hash: String,
    pub access: String,
    pub policy: String,
    pub queue: String,
    pub n_sources: u16,
    pub lambda_hz: f64,
    pub runs: usize,
    pub naoi_mean_s: f64,
    /// Sample standard deviation across seeds; zero for a single run.
    pub naoi_std_s: f64,
    pub throughput_mean_bps: f64,
}

impl GroupSummary {
    /// Access, policy and queue: what differs between compared systems.
    pub fn scheme(&self) -> String {
        format!("{}/{}/{}", self.access, self.policy, self.queue)
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-configuration NAoI across seeds, in (scheme, N, λ) order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<&str, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(&r.config_hash).or_default().push(r);
    }
    let mut out: Vec<GroupSummary> = groups
        .into_iter()
        .map(|(hash, rs)| {
            let naois: Vec<f64> = rs.iter().map(|r| r.naoi_s).collect();
            let tps: Vec<f64> = rs.iter().map(|r| r.throughput_bps).collect();
            let (naoi_mean_s, naoi_std_s) = mean_std(&naois);
            let r0 = rs[0];
            GroupSummary {
                config_hash: hash.to_string(),
                access: r0.access.clone(),
                policy: r0.policy.clone(),
                queue: r0.queue.clone(),
                n_sources: r0.n_sources,
                lambda_hz: r0.lambda_hz,
                runs: rs.len(),
                naoi_mean_s,
                naoi_std_s,
                throughput_mean_bps: mean_std(&tps).0,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.scheme(), a.n_sources)
            .cmp(&(b.scheme(), b.n_sources))
            .then(a.lambda_hz.total_cmp(&b.lambda_hz))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub n_sources: u16,
    pub lambda_hz: f64,
    pub scheme: String,
    pub reference: String,
    /// NAoI of `scheme` over NAoI of `reference`: the improvement factor the
    /// reference achieves.
    pub ratio: f64,
}

/// Scheme preferred as the reference of ratio tables when present.
pub const DEFAULT_REFERENCE: &str = "polling/mw/lcfs1";

/// Compares every scheme with `reference` at each (N, λ) where both ran.
pub fn ratio_table(groups: &[GroupSummary], reference: &str) -> Vec<RatioRow> {
    let mut out = Vec::new();
    for r in groups.iter().filter(|g| g.scheme() == reference) {
        for g in groups {
            if g.scheme() != reference && g.n_sources == r.n_sources && g.lambda_hz == r.lambda_hz {
                out.push(RatioRow {
                    n_sources: g.n_sources,
                    lambda_hz: g.lambda_hz,
                    scheme: g.scheme(),
                    reference: reference.to_string(),
                    ratio: g.naoi_mean_s / r.naoi_mean_s,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares; `None` with fewer than two distinct x values.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub scheme: String,
    pub lambda_hz: f64,
    pub points: usize,
    pub slope_s_per_source: f64,
    pub intercept_s: f64,
    pub r2: f64,
}

/// NAoI-vs-N fit of every scheme swept over at least three values of N.
pub fn n_scaling(groups: &[GroupSummary]) -> Vec<ScalingRow> {
    let mut by: BTreeMap<(String, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for g in groups {
        by.entry((g.scheme(), g.lambda_hz.to_bits()))
            .or_default()
            .push((f64::from(g.n_sources), g.naoi_mean_s));
    }
    by.into_iter()
        .filter(|(_, pts)| pts.len() >= 3)
        .filter_map(|((scheme, l), pts)| {
            linear_fit(&pts).map(|f| ScalingRow {
                scheme,
                lambda_hz: f64::from_bits(l),
                points: pts.len(),
                slope_s_per_source: f.slope,
                intercept_s: f.intercept,
                r2: f.r2,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliveryAnalysis {
    pub horizon_s: f64,
    pub naoi_s: f64,
    pub deliveries: u64,
    pub corrupt: u64,
    pub throughput_bps: f64,
    pub per_instance: BTreeMap<InstanceId, f64>,
}

/// Recomputes every age average from a harness delivery log. Gives the same
/// NAoI as the destination reported for the run.
pub fn analyze_deliveries(records: &[DeliveryRecord]) -> Result<DeliveryAnalysis, AnalyzeError> {
    let skew = DestinationOptions::default().skew_bound;
    let mut trackers: BTreeMap<InstanceId, AgeTracker> = BTreeMap::new();
    let mut horizon = None;
    let (mut deliveries, mut corrupt, mut bytes) = (0, 0, 0u64);
    for r in records {
        let id = InstanceId::new(r.source_id, r.info_type);
        match r.event.as_str() {
            "register" => {
                trackers.entry(id).or_insert_with(|| {
                    AgeTracker::new(Timestamp(r.received_us)).with_skew_bound(skew)
                });
            }
            "deliver" => {
                let t = trackers.get_mut(&id).ok_or_else(|| {
                    AnalyzeError::Deliveries(format!("delivery for unregistered {id}"))
                })?;
                // same rule as the destination: a gen timestamp too far ahead never reaches the tracker
                if t.observe_delivery(Timestamp(r.gen_us), Timestamp(r.received_us))
                    .is_ok()
                {
                    deliveries += 1;
                    bytes += r.bytes as u64;
                }
                if !r.intact {
                    corrupt += 1;
                }
            }
            "end" => horizon = Some(Timestamp(r.received_us)),
            other => return Err(AnalyzeError::Deliveries(format!("unknown event `{other}`"))),
        }
    }
    let horizon = horizon
        .ok_or_else(|| AnalyzeError::Deliveries("no `end` record; run did not finish".into()))?;
    if trackers.is_empty() {
        return Err(AnalyzeError::Deliveries("no instance registered".into()));
    }
    let report = naoi(trackers.iter().map(|(id, t)| (*id, t)), horizon)?;
    let secs = horizon.as_secs_f64();
    Ok(DeliveryAnalysis {
        horizon_s: secs,
        naoi_s: report.naoi,
        deliveries,
        corrupt,
        throughput_bps: bytes as f64 * 8.0 / secs,
        per_instance: report.per_source_average,
    })
}

/// Grid point with the smallest simulated age for `discipline`.
pub fn mm1_minimizer(points: &[Mm1Point], discipline: Discipline) -> Option<Mm1Point> {
    points
        .iter()
        .filter(|p| p.discipline == discipline)
        .min_by(|a, b| a.simulated_s.total_cmp(&b.simulated_s))
        .copied()
}

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
