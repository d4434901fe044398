//! Per-trial records and the experiment output directory.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{LabError, LabResult};
use crate::formats;

/// Outcome of one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub s: usize,
    pub lambda: f64,
    pub q_obs: usize,
    /// Every active set stayed inside the optimal support.
    pub contained: bool,
    pub fitted_rate: Option<f64>,
    pub final_kkt_residual: f64,
    /// Time for `||u(t) - u*||` to reach 1% of `||u(0) - u*||`.
    pub time_to_1pct: Option<f64>,
    pub converged: bool,
    pub switches: usize,
    /// Run label when a trial has several runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A trial whose simulation failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_index: usize,
    pub s: usize,
    pub lambda: f64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub artifact: String,
    pub artifact_version: String,
    pub wall_time_seconds: f64,
    pub timestamp_unix: u64,
    pub files: Vec<String>,
}

/// Directory receiving one experiment's artifacts.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> LabResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| LabError::io(root, e))?;
        Ok(OutputDir { root: root.to_owned(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of a file to be written, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_owned());
        }
        self.root.join(name)
    }

    pub fn write_config(&mut self, cfg: &ExperimentConfig) -> LabResult<()> {
        let p = self.file("config.json");
        formats::write_json(&p, cfg)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, items: impl IntoIterator<Item = T>) -> LabResult<()> {
        let p = self.file(name);
        let file = std::fs::File::create(&p).map_err(|e| LabError::io(&p, e))?;
        let mut w = std::io::BufWriter::new(file);
        for item in items {
            serde_json::to_writer(&mut w, &item)?;
            w.write_all(b"\n").map_err(|e| LabError::io(&p, e))?;
        }
        w.flush().map_err(|e| LabError::io(&p, e))
    }

    pub fn write_manifest(&mut self, cfg: &ExperimentConfig, wall: Duration) -> LabResult<()> {
        let p = self.file("manifest.json");
        let manifest = Manifest {
            experiment: cfg.experiment.tag().to_owned(),
            seed: cfg.seed,
            artifact: env!("CARGO_PKG_NAME").to_owned(),
            artifact_version: env!("CARGO_PKG_VERSION").to_owned(),
            wall_time_seconds: wall.as_secs_f64(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            files: self.files.clone(),
        };
        formats::write_json(&p, &manifest)
    }
}
