//! Run manifests and on-disk artifact conventions.
//!
//! Every command writes `manifest.json` beside its outputs with the complete
//! parameter set that produced them, so a run can be reproduced exactly.
//! No artifact contains wall-clock data: identical parameters yield
//! byte-identical files (timings go to stdout only).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Complete record of one command invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// `builtin:<name>`, `file:<path>`, or `result:<dir>` provenance.
    pub model_source: String,
    /// `simplex-grid` or `local-blur`.
    pub belief_scheme: String,
    /// Grid spacing; meaningful for the simplex-grid scheme only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Requested worker cap; 0 means one worker per available core.
    pub jobs: usize,
    pub out_dir: String,
}

/// Creates the output directory (and parents) if needed.
pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Check(format!("cannot encode {name}: {e}")))?;
    text.push('\n');
    fs::write(&path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Writes an already-rendered text artifact (CSV, JSONL).
pub fn write_text(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, content)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Reads and decodes a JSON artifact from a result directory.
pub fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T, CliError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is corrupt: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_skips_absent_fields() {
        let manifest = RunManifest {
            command: "solve".into(),
            model_source: "builtin:three-state".into(),
            belief_scheme: "simplex-grid".into(),
            spacing: Some(0.2),
            gamma: 0.95,
            beta: 5.0,
            tol: 1e-8,
            max_iter: 10_000,
            seed: None,
            trials: None,
            horizon: None,
            jobs: 0,
            out_dir: "out".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        write_json(dir.path(), "manifest.json", &manifest).unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(!text.contains("seed"), "absent fields must be omitted");
        let back: RunManifest = read_json(dir.path(), "manifest.json").unwrap();
        assert_eq!(back.command, "solve");
        assert_eq!(back.spacing, Some(0.2));
        assert_eq!(back.seed, None);
    }

    #[test]
    fn identical_values_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let values = vec![0.1f64 + 0.2, 1.0 / 3.0];
        write_json(dir.path(), "a.json", &values).unwrap();
        write_json(dir.path(), "b.json", &values).unwrap();
        let a = fs::read(dir.path().join("a.json")).unwrap();
        let b = fs::read(dir.path().join("b.json")).unwrap();
        assert_eq!(a, b);
    }
}
