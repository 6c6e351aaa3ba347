//! Per-run results and the shared CSV schema.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::instance::InstanceId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance: InstanceId,
    pub average_age_s: f64,
    pub generated: u64,
    pub deliveries: u64,
    pub delivered_bytes: u64,
    /// Queue drops, rate-limiter discards, lost single-packet updates and
    /// abandoned fragmented ones.
    pub drops: u64,
    pub polls: u64,
    pub timeouts: u64,
    /// Still sitting in the queue at the horizon.
    pub queued: u64,
    /// Released by the queue but neither delivered nor lost by the horizon.
    pub in_flight: u64,
}

impl InstanceMetrics {
    /// generated = delivered + dropped + in flight + queued
    pub fn is_conserved(&self) -> bool {
        self.generated == self.deliveries + self.drops + self.in_flight + self.queued
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub config_hash: String,
    pub policy: String,
    pub access: String,
    pub queue: String,
    pub n_sources: u16,
    pub lambda_hz: f64,
    pub seed: u64,
    pub horizon_s: f64,
    pub naoi_s: f64,
    /// Application payload bits delivered per second.
    pub throughput_bps: f64,
    pub instances: Vec<InstanceMetrics>,
}

impl MetricsLog {
    pub(crate) fn assemble(cfg: &SimConfig, naoi_s: f64, instances: Vec<InstanceMetrics>) -> Self {
        let bytes: u64 = instances.iter().map(|i| i.delivered_bytes).sum();
        MetricsLog {
            config_hash: cfg.config_hash(),
            policy: cfg.access.policy_label().to_string(),
            access: cfg.access.label().to_string(),
            queue: cfg.queue.label(),
            n_sources: cfg.n_sources,
            lambda_hz: cfg.lambda_hz(),
            seed: cfg.seed,
            horizon_s: cfg.horizon_s,
            naoi_s,
            throughput_bps: bytes as f64 * 8.0 / cfg.horizon_s,
            instances,
        }
    }

    pub fn deliveries(&self) -> u64 {
        self.instances.iter().map(|i| i.deliveries).sum()
    }

    pub fn drops(&self) -> u64 {
        self.instances.iter().map(|i| i.drops).sum()
    }

    pub fn timeouts(&self) -> u64 {
        self.instances.iter().map(|i| i.timeouts).sum()
    }

    pub fn polls(&self) -> u64 {
        self.instances.iter().map(|i| i.polls).sum()
    }

    pub fn row(&self) -> MetricsRow {
        MetricsRow {
            config_hash: self.config_hash.clone(),
            policy: self.policy.clone(),
            access: self.access.clone(),
            queue: self.queue.clone(),
            n_sources: self.n_sources,
            lambda_hz: self.lambda_hz,
            seed: self.seed,
            horizon_s: self.horizon_s,
            naoi_s: self.naoi_s,
            throughput_bps: self.throughput_bps,
            deliveries: self.deliveries(),
            drops: self.drops(),
            timeouts: self.timeouts(),
        }
    }
}

/// One CSV line. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRow {
    pub config_hash: String,
    pub policy: String,
    pub access: String,
    pub queue: String,
    pub n_sources: u16,
    pub lambda_hz: f64,
    pub seed: u64,
    pub horizon_s: f64,
    pub naoi_s: f64,
    pub throughput_bps: f64,
    pub deliveries: u64,
    pub drops: u64,
    pub timeouts: u64,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "config_hash",
    "policy",
    "access",
    "queue",
    "n_sources",
    "lambda_hz",
    "seed",
    "horizon_s",
    "naoi_s",
    "throughput_bps",
    "deliveries",
    "drops",
    "timeouts",
];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn write_rows<W: Write>(out: W, rows: &[MetricsRow], header: bool) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows, checking the header against the schema first so that a bad
/// file is reported by column name.
pub fn read_rows<R: Read>(input: R) -> Result<Vec<MetricsRow>, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    for col in CSV_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(CsvError::MissingColumn(col.to_string()));
        }
    }
    if let Some(extra) = headers.iter().find(|h| !CSV_COLUMNS.contains(h)) {
        return Err(CsvError::UnexpectedColumn(extra.to_string()));
    }
    r.deserialize()
        .map(|row| row.map_err(CsvError::from))
        .collect()
}
