//! The `run.json` manifest that ties a trace directory to its configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vacimg::config::RunConfig;
use vacimg::io::write_atomic;

use crate::{CliError, CliResult};

pub const MANIFEST: &str = "run.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Trace stems written for this configuration, sorted.
    pub traces: Vec<String>,
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime("io", format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

pub fn read_manifest(dir: &Path) -> CliResult<Option<RunManifest>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let m: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::runtime("parse", format!("{} line {}: {e}", path.display(), e.line())))?;
    Ok(Some(m))
}

/// Records `stems` under the config; traces of an earlier, different
/// configuration are dropped from the listing.
pub fn update_manifest(dir: &Path, config: &RunConfig, stems: &[String]) -> CliResult<PathBuf> {
    let hash = config.hash();
    let mut traces = match read_manifest(dir) {
        Ok(Some(m)) if m.config_hash == hash => m.traces,
        _ => Vec::new(),
    };
    traces.extend(stems.iter().cloned());
    traces.sort();
    traces.dedup();
    let mut stored = config.clone();
    stored.output_dir = None;
    let m = RunManifest { config_hash: hash, seed: config.seed, config: stored, traces };
    let path = dir.join(MANIFEST);
    write_atomic(&path, serde_json::to_string_pretty(&m)?.as_bytes())?;
    Ok(path)
}

/// Configuration for a trace directory: an explicit file wins over the
/// directory manifest.
pub fn config_for(explicit: Option<&Path>, dir: &Path) -> CliResult<Option<RunConfig>> {
    if let Some(p) = explicit {
        return load_config(p).map(Some);
    }
    Ok(read_manifest(dir)?.map(|m| m.config))
}
