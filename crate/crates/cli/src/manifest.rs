//! Stage manifests and digest gating.
//!
//! Every unit of work (one stage applied to one dataset, model or seed)
//! writes a manifest under `manifests/<stage>/<unit>.json` recording the
//! digest of its inputs and the SHA-256 of each output file. A unit whose
//! recorded input digest matches the current one and whose outputs are
//! intact is skipped as up to date. A downstream stage only runs on an
//! upstream manifest that is current for the present configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use recipro_core::digest::{sha256_hex, Fingerprint};
use recipro_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("stale upstream stage {stage} ({unit}): {reason}")]
    Stale {
        stage: String,
        unit: String,
        reason: String,
    },
}

pub type StageResult<T> = std::result::Result<T, StageError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub unit: String,
    pub input_digest: String,
    /// Output path relative to the output root -> SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Stage-specific facts for downstream consumers.
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl Manifest {
    /// Digest over the recorded outputs, for chaining into downstream
    /// input digests.
    pub fn output_digest(&self) -> String {
        let mut fp = Fingerprint::new();
        for (path, sha) in &self.outputs {
            fp.part(path).part(sha);
        }
        fp.hex()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitStatus {
    Ran,
    UpToDate,
}

/// A stage's produced files, relative path to bytes.
pub type Outputs = Vec<(String, Vec<u8>)>;

pub struct Store {
    pub root: PathBuf,
}

impl Store {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn manifest_path(&self, stage: &str, unit: &str) -> PathBuf {
        self.root.join("manifests").join(stage).join(format!("{unit}.json"))
    }

    pub fn read_manifest(&self, stage: &str, unit: &str) -> Option<Manifest> {
        let text = std::fs::read_to_string(self.manifest_path(stage, unit)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn outputs_intact(&self, m: &Manifest) -> Option<String> {
        for (rel, sha) in &m.outputs {
            match std::fs::read(self.root.join(rel)) {
                Ok(bytes) if &sha256_hex(&bytes) == sha => {}
                Ok(_) => return Some(format!("{rel} was modified")),
                Err(_) => return Some(format!("{rel} is missing")),
            }
        }
        None
    }

    /// Load an upstream manifest, insisting that it was produced from
    /// `expected_digest` and that its outputs are untouched.
    pub fn require(&self, stage: &str, unit: &str, expected_digest: &str) -> StageResult<Manifest> {
        let stale = |reason: String| StageError::Stale {
            stage: stage.into(),
            unit: unit.into(),
            reason,
        };
        let m = self
            .read_manifest(stage, unit)
            .ok_or_else(|| stale(format!("no manifest; run `{stage}` first")))?;
        if m.input_digest != expected_digest {
            return Err(stale(format!("inputs changed since it ran; re-run `{stage}`")));
        }
        if let Some(reason) = self.outputs_intact(&m) {
            return Err(stale(reason));
        }
        Ok(m)
    }

    pub fn read_output(&self, rel: &str) -> StageResult<Vec<u8>> {
        let p = self.root.join(rel);
        Ok(std::fs::read(&p).map_err(|e| Error::io(p, e))?)
    }

    /// Run `produce` unless a current manifest already covers this unit.
    pub fn run_unit<F>(
        &self,
        stage: &str,
        unit: &str,
        input_digest: &str,
        force: bool,
        produce: F,
    ) -> StageResult<(UnitStatus, Manifest)>
    where
        F: FnOnce() -> StageResult<(Outputs, serde_json::Value)>,
    {
        if !force {
            if let Some(m) = self.read_manifest(stage, unit) {
                if m.input_digest == input_digest && self.outputs_intact(&m).is_none() {
                    log::info!("{stage} {unit}: up to date");
                    return Ok((UnitStatus::UpToDate, m));
                }
            }
        }
        let (outputs, summary) = produce()?;
        let mut recorded = BTreeMap::new();
        for (rel, bytes) in &outputs {
            let p = self.root.join(rel);
            write_atomic(&p, bytes)?;
            recorded.insert(rel.clone(), sha256_hex(bytes));
        }
        let m = Manifest {
            stage: stage.into(),
            unit: unit.into(),
            input_digest: input_digest.into(),
            outputs: recorded,
            summary,
        };
        let body = serde_json::to_vec_pretty(&m).expect("manifest serializes");
        write_atomic(&self.manifest_path(stage, unit), &body)?;
        log::info!("{stage} {unit}: done ({} files)", m.outputs.len());
        Ok((UnitStatus::Ran, m))
    }

    /// All manifests on disk, sorted by (stage, unit).
    pub fn all_manifests(&self) -> Vec<Manifest> {
        let mut out = Vec::new();
        let Ok(stages) = std::fs::read_dir(self.root.join("manifests")) else {
            return out;
        };
        let mut stage_dirs: Vec<PathBuf> = stages.flatten().map(|e| e.path()).collect();
        stage_dirs.sort();
        for dir in stage_dirs {
            let Ok(entries) = std::fs::read_dir(&dir) else { continue };
            let mut files: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
            files.sort();
            for f in files {
                if let Some(m) = std::fs::read_to_string(&f)
                    .ok()
                    .and_then(|t| serde_json::from_str(&t).ok())
                {
                    out.push(m);
                }
            }
        }
        out
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let parent = path.parent().expect("output paths have a parent");
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn produce(body: &'static str) -> impl FnOnce() -> StageResult<(Outputs, serde_json::Value)> {
        move || {
            Ok((
                vec![("a/x.txt".to_string(), body.as_bytes().to_vec())],
                serde_json::Value::Null,
            ))
        }
    }

    #[test]
    fn skip_when_current() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let (s, m) = store.run_unit("s", "u", "d1", false, produce("one")).unwrap();
        assert_eq!(s, UnitStatus::Ran);
        let (s, m2) = store.run_unit("s", "u", "d1", false, produce("two")).unwrap();
        assert_eq!(s, UnitStatus::UpToDate);
        assert_eq!(m, m2);
        assert_eq!(std::fs::read_to_string(dir.path().join("a/x.txt")).unwrap(), "one");
        let (s, _) = store.run_unit("s", "u", "d2", false, produce("two")).unwrap();
        assert_eq!(s, UnitStatus::Ran);
    }

    #[test]
    fn require_detects_staleness() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        assert!(matches!(store.require("s", "u", "d"), Err(StageError::Stale { .. })));
        store.run_unit("s", "u", "d", false, produce("one")).unwrap();
        assert!(store.require("s", "u", "d").is_ok());
        assert!(matches!(
            store.require("s", "u", "other"),
            Err(StageError::Stale { .. })
        ));
        std::fs::write(dir.path().join("a/x.txt"), "tampered").unwrap();
        let err = store.require("s", "u", "d").unwrap_err();
        assert!(err.to_string().contains("modified"), "{err}");
    }
}
