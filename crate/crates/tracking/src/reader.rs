//! Reading run directories back, tolerant of crashes that truncate the
//! final metrics line.

use std::path::{Path, PathBuf};

use crate::run::{MetricEvent, RunStatus};
use crate::TrackError;

#[derive(Debug)]
pub struct LoadedRun {
    pub id: String,
    pub dir: PathBuf,
    pub config: serde_json::Value,
    pub meta: serde_json::Value,
    pub status: RunStatus,
    pub metrics: Vec<MetricEvent>,
    pub warnings: Vec<String>,
}

impl LoadedRun {
    /// Metric series for one name, ordered as logged.
    pub fn series(&self, name: &str) -> Vec<(u64, f64)> {
        self.metrics.iter().filter(|e| e.name == name).map(|e| (e.step, e.value)).collect()
    }
}

#[derive(Debug, Default)]
pub struct RunScan {
    pub runs: Vec<LoadedRun>,
    /// Per-directory failures: reported, never silently skipped.
    pub errors: Vec<(PathBuf, String)>,
}

/// Parses every run subdirectory under `dir`.
pub fn read_runs(dir: &Path) -> Result<RunScan, TrackError> {
    let mut scan = RunScan::default();
    if !dir.exists() {
        return Ok(scan);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    entries.sort();
    for run_dir in entries {
        match load_run(&run_dir) {
            Ok(run) => scan.runs.push(run),
            Err(err) => scan.errors.push((run_dir, err.to_string())),
        }
    }
    Ok(scan)
}

fn load_run(dir: &Path) -> Result<LoadedRun, TrackError> {
    let config: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("config.json"))?)?;
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
    let status = match meta["status"].as_str() {
        Some("finished") => RunStatus::Finished,
        Some("failed") => RunStatus::Failed,
        _ => RunStatus::Running,
    };
    let id = meta["run_id"].as_str().unwrap_or_default().to_string();

    let mut warnings = Vec::new();
    let raw = std::fs::read_to_string(dir.join("metrics.jsonl"))?;
    let mut metrics = Vec::new();
    let lines: Vec<&str> = raw.split('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<MetricEvent>(line) {
            Ok(event) => metrics.push(event),
            Err(e) => {
                let is_last = i + 1 == lines.len() || lines[i + 1..].iter().all(|l| l.is_empty());
                if is_last {
                    warnings.push(format!("truncated final metrics line dropped: {e}"));
                } else {
                    warnings.push(format!("unparseable metrics line {i} skipped: {e}"));
                }
            }
        }
    }
    Ok(LoadedRun { id, dir: dir.to_path_buf(), config, meta, status, metrics, warnings })
}
