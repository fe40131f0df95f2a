//! Run metadata capture: source tree hash, dependency manifest, hardware
//! description and an allowlisted environment subset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Only these variables are captured; never the full environment.
const ENV_ALLOWLIST: &[&str] = &["PWD", "LANG", "LC_ALL", "TZ", "SHELL", "CARGO_PKG_VERSION"];

#[derive(Debug, Clone, Default)]
pub struct MetaOptions {
    /// Directory whose `.rs`/`.toml` files are hashed; defaults to the
    /// nearest ancestor of the current directory containing `Cargo.toml`.
    pub source_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceInfo {
    pub root: String,
    pub tree_sha256: String,
    pub file_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependencyInfo {
    pub package: String,
    pub version: String,
    pub lockfile_sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardwareInfo {
    pub cpu_model: String,
    pub logical_cpus: usize,
    pub total_memory_kb: Option<u64>,
    pub os: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub status: String,
    pub created_unix_ms: u128,
    pub finished_unix_ms: Option<u128>,
    pub source: SourceInfo,
    pub dependencies: DependencyInfo,
    pub hardware: HardwareInfo,
    pub environment: std::collections::BTreeMap<String, String>,
}

fn find_source_root() -> PathBuf {
    let mut dir = std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."));
    loop {
        if dir.join("Cargo.toml").exists() {
            // prefer the outermost manifest (workspace root)
            let mut best = dir.clone();
            let mut cursor = dir.clone();
            while let Some(parent) = cursor.parent() {
                if parent.join("Cargo.toml").exists() {
                    best = parent.to_path_buf();
                }
                cursor = parent.to_path_buf();
            }
            return best;
        }
        match dir.parent() {
            Some(p) => dir = p.to_path_buf(),
            None => return PathBuf::from("."),
        }
    }
}

fn collect_source_files(root: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| {
            let name = e.file_name().to_string_lossy();
            name != "target" && name != ".git" && name != "node_modules"
        })
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .filter(|e| {
            matches!(
                e.path().extension().and_then(|x| x.to_str()),
                Some("rs") | Some("toml")
            )
        })
        .map(|e| e.into_path())
        .collect();
    files.sort();
    files
}

/// SHA-256 over the sorted (relative path, length, bytes) stream of all
/// source files under `root`. Re-hashing an unchanged tree reproduces it.
pub fn hash_source_tree(root: &Path) -> (String, usize) {
    let files = collect_source_files(root);
    let mut hasher = Sha256::new();
    for f in &files {
        let rel = f.strip_prefix(root).unwrap_or(f);
        let content = std::fs::read(f).unwrap_or_default();
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(&content);
    }
    (hex_digest(hasher), files.len())
}

fn hex_digest(hasher: Sha256) -> String {
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn read_cpu_model() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1).map(|v| v.trim().to_string()))
        })
        .unwrap_or_else(|| "unknown".to_string())
}

fn read_total_memory_kb() -> Option<u64> {
    let s = std::fs::read_to_string("/proc/meminfo").ok()?;
    s.lines().find(|l| l.starts_with("MemTotal:")).and_then(|l| {
        l.split_whitespace().nth(1).and_then(|v| v.parse().ok())
    })
}

pub fn capture_meta(run_id: &str, options: &MetaOptions) -> RunMeta {
    let root = options.source_root.clone().unwrap_or_else(find_source_root);
    let (tree_sha256, file_count) = hash_source_tree(&root);
    let lockfile_sha256 = std::fs::read(root.join("Cargo.lock")).ok().map(|bytes| {
        let mut h = Sha256::new();
        h.update(&bytes);
        hex_digest(h)
    });
    let environment = ENV_ALLOWLIST
        .iter()
        .filter_map(|k| std::env::var(k).ok().map(|v| (k.to_string(), v)))
        .collect();
    RunMeta {
        run_id: run_id.to_string(),
        status: "running".to_string(),
        created_unix_ms: unix_ms(),
        finished_unix_ms: None,
        source: SourceInfo { root: root.to_string_lossy().into_owned(), tree_sha256, file_count },
        dependencies: DependencyInfo {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            lockfile_sha256,
        },
        hardware: HardwareInfo {
            cpu_model: read_cpu_model(),
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            total_memory_kb: read_total_memory_kb(),
            os: std::env::consts::OS.to_string(),
        },
        environment,
    }
}

pub(crate) fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rehashing_reproduces_tree_hash() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.rs"), "fn a() {}").unwrap();
        std::fs::write(dir.path().join("b.toml"), "[x]\n").unwrap();
        std::fs::write(dir.path().join("ignored.txt"), "nope").unwrap();
        let (h1, n1) = hash_source_tree(dir.path());
        let (h2, n2) = hash_source_tree(dir.path());
        assert_eq!(h1, h2);
        assert_eq!((n1, n2), (2, 2));
        std::fs::write(dir.path().join("a.rs"), "fn a() { /* edited */ }").unwrap();
        let (h3, _) = hash_source_tree(dir.path());
        assert_ne!(h1, h3);
    }

    #[test]
    fn environment_capture_is_allowlisted() {
        std::env::set_var("SECRET_TOKEN_FOR_TEST", "do-not-capture");
        let meta = capture_meta("x", &MetaOptions { source_root: Some(std::env::temp_dir()) });
        assert!(!meta.environment.contains_key("SECRET_TOKEN_FOR_TEST"));
        for k in meta.environment.keys() {
            assert!(ENV_ALLOWLIST.contains(&k.as_str()));
        }
    }
}
