//! The experiment file: one JSON document describing where the data comes
//! from (a generator section or an input path), how to detect, how to score,
//! and which seeds to repeat over.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use geocomm::pipeline::PipelineConfig;
use geocomm::sbm::{MergeConfig, SbmConfig};
use geocomm::{Error, Result};

pub const EXPERIMENT_SCHEMA: &str = "experiment/1";

/// Which detection routine `detect` and `bench` dispatch to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectMode {
    #[default]
    Fixed,
    Static,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    #[default]
    Ami,
    Ecs,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Ami => "ami",
            MetricKind::Ecs => "ecs",
        }
    }
}

/// Which planted partition a run is scored against; co-clustering models
/// carry a second (receiving-side) truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthSide {
    #[default]
    Send,
    Receive,
}

/// One labeled run inside a benchmark: its own pipeline, detection mode, and
/// optionally its own generator (falling back to the experiment's).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchEntry {
    pub label: String,
    #[serde(default)]
    pub sbm: Option<SbmConfig>,
    #[serde(default)]
    pub merge: Option<MergeConfig>,
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub mode: DetectMode,
    #[serde(default)]
    pub truth_side: TruthSide,
    /// Score this entry with a different metric than the experiment's.
    #[serde(default)]
    pub metric: Option<MetricKind>,
}

/// A whole experiment in one versioned document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    /// Stem for every file the run writes.
    pub name: String,
    #[serde(default)]
    pub sbm: Option<SbmConfig>,
    #[serde(default)]
    pub merge: Option<MergeConfig>,
    /// Pre-existing snapshot-sequence file; takes precedence over generators.
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Ground-truth partition file for `score`.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// Predicted partition file for `score`.
    #[serde(default)]
    pub pred: Option<PathBuf>,
    #[serde(default)]
    pub pipeline: Option<PipelineConfig>,
    #[serde(default)]
    pub mode: DetectMode,
    #[serde(default)]
    pub metric: MetricKind,
    /// Base seed; repetition r uses `seed + r` unless `seeds` lists them.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub bench: Vec<BenchEntry>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.schema != EXPERIMENT_SCHEMA {
            return Err(Error::Parse(format!(
                "expected schema {EXPERIMENT_SCHEMA}, found {}",
                self.schema
            )));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!(
                "name must be a plain file stem, got {:?}",
                self.name
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.seeds.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::Config("an explicit seed list cannot be empty".into()));
        }
        for entry in &self.bench {
            if entry.label.is_empty() || entry.label.contains(['/', '\\']) {
                return Err(Error::Config(format!(
                    "bench label must be a plain file stem, got {:?}",
                    entry.label
                )));
            }
        }
        Ok(())
    }

    /// Seeds for this run: the `--seed` override, the explicit list, or
    /// `seed..seed + repetitions`.
    pub fn run_seeds(&self, override_seed: Option<u64>) -> Vec<u64> {
        if let Some(s) = override_seed {
            return vec![s];
        }
        if let Some(list) = &self.seeds {
            return list.clone();
        }
        (0..self.repetitions as u64).map(|r| self.seed + r).collect()
    }

    pub fn pipeline(&self) -> Result<&PipelineConfig> {
        self.pipeline
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a pipeline section".into()))
    }
}
