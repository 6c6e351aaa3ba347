//! Experiment files: a TOML document with exactly one `[sim]` or `[harness]`
//! table plus a `[reproducibility]` block.
//!
//! ```toml
//! [reproducibility]
//! seed = 7
//! git_describe = "v0.1.0-3-gabc1234"
//! config_hash = "1f0e..."   # informational, re-stamped on render
//!
//! [sim]
//! n_sources = 1
//! ...
//! ```
//!
//! The seed lives only in the reproducibility block so that the config hash
//! of a `[sim]` table is the same for every seed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::destination::harness_config_hash;
use crate::harness::{HarnessConfig, HarnessError};
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reproducibility {
    pub seed: u64,
    #[serde(default)]
    pub git_describe: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Sim(SimConfig),
    Harness(HarnessConfig),
}

impl Experiment {
    pub fn config_hash(&self) -> String {
        match self {
            Experiment::Sim(c) => c.config_hash(),
            Experiment::Harness(c) => harness_config_hash(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentFile {
    pub experiment: Experiment,
    pub reproducibility: Reproducibility,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    reproducibility: Reproducibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    harness: Option<HarnessConfig>,
}

/// One problem, located in the source text when possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Located {
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{}", render_located(path, problems))]
    Invalid {
        path: PathBuf,
        problems: Vec<Located>,
    },
    #[error("{path}: {source}", path = path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn render_located(path: &Path, problems: &[Located]) -> String {
    problems
        .iter()
        .map(|p| match p.line {
            Some(l) => format!("{}:{}: {}", path.display(), l, p.message),
            None => format!("{}: {}", path.display(), p.message),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Best-effort line of a `key = ...` assignment for validation messages of
/// the form `a.b.key: ...`.
fn line_of_key(text: &str, problem: &str) -> Option<usize> {
    let path = problem.split(':').next()?;
    let key = path.rsplit('.').next()?.trim();
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

impl ExperimentFile {
    /// Wraps `experiment`, whose seed is replaced by `seed`.
    pub fn new(mut experiment: Experiment, seed: u64) -> Self {
        match &mut experiment {
            Experiment::Sim(c) => c.seed = seed,
            Experiment::Harness(c) => c.seed = seed,
        }
        let config_hash = Some(experiment.config_hash());
        ExperimentFile {
            experiment,
            reproducibility: Reproducibility {
                seed,
                git_describe: String::new(),
                config_hash,
            },
        }
    }

    pub fn seed(&self) -> u64 {
        self.reproducibility.seed
    }

    /// Parses and validates. `path` is used only in messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ExperimentError> {
        let invalid = |problems| ExperimentError::Invalid {
            path: path.to_path_buf(),
            problems,
        };
        let raw: Raw = toml::from_str(text).map_err(|e| {
            invalid(vec![Located {
                line: e.span().map(|s| line_of(text, s.start)),
                message: e.message().trim().to_string(),
            }])
        })?;
        let seed = raw.reproducibility.seed;
        let experiment = match (raw.sim, raw.harness) {
            (Some(mut sim), None) => {
                sim.seed = seed;
                Experiment::Sim(sim)
            }
            (None, Some(mut h)) => {
                h.seed = seed;
                Experiment::Harness(h)
            }
            (None, None) => {
                return Err(invalid(vec![Located {
                    line: None,
                    message: "expected a [sim] or [harness] table".into(),
                }]))
            }
            (Some(_), Some(_)) => {
                return Err(invalid(vec![Located {
                    line: None,
                    message: "[sim] and [harness] are mutually exclusive".into(),
                }]))
            }
        };
        let problems = match &experiment {
            Experiment::Sim(c) => c.validate().err().map(|e| e.problems),
            Experiment::Harness(c) => match c.validate() {
                Err(HarnessError::Config(p)) => Some(p),
                _ => None,
            },
        };
        if let Some(problems) = problems {
            return Err(invalid(
                problems
                    .into_iter()
                    .map(|m| Located {
                        line: line_of_key(text, &m),
                        message: m,
                    })
                    .collect(),
            ));
        }
        Ok(ExperimentFile {
            experiment,
            reproducibility: raw.reproducibility,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// The stored hash differs from the one computed from the tables, i.e.
    /// the file was edited after it was rendered.
    pub fn hash_mismatch(&self) -> Option<(String, String)> {
        let computed = self.experiment.config_hash();
        match &self.reproducibility.config_hash {
            Some(stored) if *stored != computed => Some((stored.clone(), computed)),
            _ => None,
        }
    }

    /// Renders with a freshly computed config hash.
    pub fn render(&self) -> String {
        let mut repro = self.reproducibility.clone();
        repro.config_hash = Some(self.experiment.config_hash());
        let (sim, harness) = match &self.experiment {
            Experiment::Sim(c) => (Some(c.clone()), None),
            Experiment::Harness(c) => (None, Some(c.clone())),
        };
        toml::to_string(&Raw {
            reproducibility: repro,
            sim,
            harness,
        })
        .expect("experiment serializes")
    }
}

impl fmt::Display for ExperimentFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// `git describe --always --dirty` of the working directory, if available.
pub fn git_describe() -> Option<String> {
    let out = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}
