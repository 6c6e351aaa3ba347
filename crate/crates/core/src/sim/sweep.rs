//! One-axis parameter sweeps, run in parallel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::metrics::MetricsLog;
use super::{run, SimError};
use crate::queueing::{DropPolicy, QueueSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "grid", rename_all = "snake_case")]
pub enum SweepAxis {
    /// Per-source generation rate; multi-stream sources keep their mix.
    Lambda(Vec<f64>),
    N(Vec<u16>),
    /// FCFS capacity; an LCFS base switches to tail-drop FCFS.
    Capacity(Vec<usize>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Lambda(g) => g.len(),
            SweepAxis::N(g) => g.len(),
            SweepAxis::Capacity(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Configuration of grid point `index`, seeded with `seed ^ index`.
    pub fn point(&self, base: &SimConfig, index: usize) -> SimConfig {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Lambda(g) => {
                let scale = g[index] / base.lambda_hz();
                for s in &mut cfg.traffic {
                    s.rate_hz *= scale;
                }
            }
            SweepAxis::N(g) => cfg.n_sources = g[index],
            SweepAxis::Capacity(g) => {
                let drop = match base.queue {
                    QueueSpec::Fcfs { drop, .. } => drop,
                    QueueSpec::Lcfs1 => DropPolicy::TailDrop,
                };
                cfg.queue = QueueSpec::Fcfs {
                    capacity: g[index],
                    drop,
                };
            }
        }
        cfg.seed = base.seed ^ index as u64;
        cfg
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub config: SimConfig,
    pub result: Result<MetricsLog, SimError>,
}

/// One run per grid point. A failing point is reported in place; the others
/// still run.
pub fn sweep(base: &SimConfig, axis: &SweepAxis) -> Result<Vec<SweepPoint>, SimError> {
    if axis.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    Ok((0..axis.len())
        .into_par_iter()
        .map(|index| {
            let config = axis.point(base, index);
            let result = run(&config);
            SweepPoint {
                index,
                config,
                result,
            }
        })
        .collect())
}
