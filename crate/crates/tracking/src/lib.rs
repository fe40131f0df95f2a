//! Local file-based experiment tracking. Each run owns a directory with
//! `config.json`, `meta.json`, an append-only `metrics.jsonl` and tee'd
//! `stdout.log`/`stderr.log`. Metadata snapshots the source tree hash,
//! dependency manifest, hardware description and an allowlisted slice of
//! the OS environment.

mod meta;
mod reader;
mod run;

pub use meta::{MetaOptions, RunMeta};
pub use reader::{read_runs, LoadedRun, RunScan};
pub use run::{ClockMode, MetricEvent, RunHandle, RunStatus, Tracker};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("non-finite metric value for '{0}'")]
    NonFinite(String),
    #[error("run is {0:?}; metrics can only be logged while running")]
    NotRunning(RunStatus),
}
