//! Run lifecycle: directory creation, metric logging, output tee, status.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::meta::{capture_meta, unix_ms, MetaOptions, RunMeta};
use crate::TrackError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Finished,
    Failed,
}

/// Wall-clock or logical timestamps for metric events. The logical clock
/// always reports zero elapsed seconds, which makes metric files
/// byte-reproducible for determinism checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    #[default]
    Wall,
    Logical,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricEvent {
    pub step: u64,
    pub name: String,
    pub value: f64,
    pub wall_time: f64,
}

pub struct Tracker {
    root: PathBuf,
    clock: ClockMode,
    meta_options: MetaOptions,
}

impl Tracker {
    pub fn new(root: impl Into<PathBuf>) -> Tracker {
        Tracker { root: root.into(), clock: ClockMode::Wall, meta_options: MetaOptions::default() }
    }

    pub fn with_clock(mut self, clock: ClockMode) -> Tracker {
        self.clock = clock;
        self
    }

    pub fn with_meta_options(mut self, options: MetaOptions) -> Tracker {
        self.meta_options = options;
        self
    }

    /// Creates `<root>/<run_id>/` with config, metadata and empty logs.
    pub fn create_run(&self, config: &serde_json::Value) -> Result<RunHandle, TrackError> {
        let run_id = uuid::Uuid::new_v4().to_string();
        let dir = self.root.join(&run_id);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_vec_pretty(config)?)?;
        let meta = capture_meta(&run_id, &self.meta_options);
        std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        let metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
        let stdout = BufWriter::new(File::create(dir.join("stdout.log"))?);
        let stderr = BufWriter::new(File::create(dir.join("stderr.log"))?);
        Ok(RunHandle {
            dir,
            run_id,
            meta,
            metrics,
            stdout,
            stderr,
            status: RunStatus::Running,
            clock: self.clock,
            start: Instant::now(),
        })
    }
}

pub struct RunHandle {
    dir: PathBuf,
    run_id: String,
    meta: RunMeta,
    metrics: BufWriter<File>,
    stdout: BufWriter<File>,
    stderr: BufWriter<File>,
    status: RunStatus,
    clock: ClockMode,
    start: Instant,
}

impl RunHandle {
    pub fn id(&self) -> &str {
        &self.run_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn status(&self) -> RunStatus {
        self.status
    }

    fn elapsed(&self) -> f64 {
        match self.clock {
            ClockMode::Wall => self.start.elapsed().as_secs_f64(),
            ClockMode::Logical => 0.0,
        }
    }

    /// Appends one JSON line per metric; values must be finite and the run
    /// must still be running. Lines are flushed before returning.
    pub fn log_metrics(&mut self, step: u64, metrics: &BTreeMap<String, f64>) -> Result<(), TrackError> {
        if self.status != RunStatus::Running {
            return Err(TrackError::NotRunning(self.status));
        }
        for (name, value) in metrics {
            if !value.is_finite() {
                return Err(TrackError::NonFinite(name.clone()));
            }
        }
        let wall_time = self.elapsed();
        for (name, value) in metrics {
            let event = MetricEvent { step, name: clone_name(name), value: *value, wall_time };
            serde_json::to_writer(&mut self.metrics, &event)?;
            self.metrics.write_all(b"\n")?;
        }
        self.metrics.flush()?;
        Ok(())
    }

    /// Tees a console line into `stdout.log` and the real stdout.
    pub fn log_line(&mut self, line: &str) {
        println!("{line}");
        let _ = writeln!(self.stdout, "{line}");
        let _ = self.stdout.flush();
    }

    /// Tees a diagnostic line into `stderr.log` and the real stderr.
    pub fn log_error_line(&mut self, line: &str) {
        eprintln!("{line}");
        let _ = writeln!(self.stderr, "{line}");
        let _ = self.stderr.flush();
    }

    pub fn flush(&mut self) -> Result<(), TrackError> {
        self.metrics.flush()?;
        self.stdout.flush()?;
        self.stderr.flush()?;
        Ok(())
    }

    /// Transitions running -> finished|failed and rewrites meta.json.
    /// The metrics file itself is never rewritten.
    pub fn finish(&mut self, status: RunStatus) -> Result<(), TrackError> {
        assert!(status != RunStatus::Running, "finish() takes a terminal status");
        if self.status != RunStatus::Running {
            return Err(TrackError::NotRunning(self.status));
        }
        self.flush()?;
        self.status = status;
        self.meta.status = match status {
            RunStatus::Finished => "finished".to_string(),
            RunStatus::Failed => "failed".to_string(),
            RunStatus::Running => unreachable!(),
        };
        self.meta.finished_unix_ms = Some(unix_ms());
        std::fs::write(self.dir.join("meta.json"), serde_json::to_vec_pretty(&self.meta)?)?;
        Ok(())
    }
}

fn clone_name(name: &str) -> String {
    name.to_string()
}
