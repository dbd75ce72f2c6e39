//! The run configuration document.
//!
//! One JSON object describes the datasets, per-dataset pipeline settings,
//! the featurizer, the model roster, the seeds and the output root.
//! Relative paths are resolved against the directory holding the config
//! file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use recipro_core::corpus::{Cleaner, CleaningConfig};
use recipro_core::eval::AgreementMode;
use recipro_core::features::FeaturizerConfig;
use recipro_core::model::TrainConfig;
use recipro_core::pipeline::{BalanceConfig, ChunkingConfig, SplitConfig};
use recipro_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub id: String,
    pub path: PathBuf,
    pub alphabet: Vec<String>,
    #[serde(default)]
    pub cleaning: CleaningConfig,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    #[serde(default)]
    pub balance: BalanceConfig,
    #[serde(default)]
    pub split: SplitConfig,
}

impl DatasetConfig {
    pub fn alphabet_set(&self) -> BTreeSet<String> {
        self.alphabet.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Hashed n-gram logistic regression.
    Baseline,
    /// Linear head over exported embeddings.
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    pub kind: ModelKind,
    /// Training settings; `seed` is replaced by the run seed. Defaults
    /// depend on the kind.
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// Encoder name recorded in probe models.
    #[serde(default)]
    pub encoder: Option<String>,
    /// Embedding file per dataset id (probe only). Each file covers every
    /// prepared example of its dataset.
    #[serde(default)]
    pub embeddings: BTreeMap<String, PathBuf>,
}

impl ModelConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let base = self.train.clone().unwrap_or_else(|| match self.kind {
            ModelKind::Baseline => TrainConfig::sparse_default(),
            ModelKind::Probe => TrainConfig::dense_default(),
        });
        TrainConfig { seed, ..base }
    }

    pub fn encoder_name(&self) -> &str {
        self.encoder.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub featurizer: FeaturizerConfig,
    pub models: Vec<ModelConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_root")]
    pub output_root: PathBuf,
    #[serde(default)]
    pub agreement_mode: AgreementMode,
    /// Classes whose recall difference is reported, first minus second.
    /// Defaults to the first two labels of each dataset's sorted alphabet.
    #[serde(default)]
    pub gap_classes: Option<(String, String)>,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_output_root() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Parse, resolve relative paths against the config's directory and
    /// validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            fix(&mut d.path);
        }
        for m in &mut self.models {
            m.embeddings.values_mut().for_each(fix);
        }
        fix(&mut self.output_root);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return bad("at least one dataset is required".into());
        }
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let mut ids = BTreeSet::new();
        for d in &self.datasets {
            check_id("dataset", &d.id)?;
            if !ids.insert(d.id.as_str()) {
                return bad(format!("duplicate dataset id {:?}", d.id));
            }
            if !d.path.is_file() {
                return bad(format!("dataset {}: no such file {}", d.id, d.path.display()));
            }
            if d.alphabet.len() < 2 || d.alphabet_set().len() != d.alphabet.len() {
                return bad(format!("dataset {}: alphabet needs at least two distinct labels", d.id));
            }
            Cleaner::new(&d.cleaning)?;
            if d.chunking.char_limit == 0 {
                return bad(format!("dataset {}: char_limit must be >= 1", d.id));
            }
            d.split.validate()?;
        }
        self.featurizer.validate()?;
        let mut model_ids = BTreeSet::new();
        for m in &self.models {
            check_id("model", &m.id)?;
            if !model_ids.insert(m.id.as_str()) {
                return bad(format!("duplicate model id {:?}", m.id));
            }
            m.train_config(0).validate()?;
            match m.kind {
                ModelKind::Baseline if !m.embeddings.is_empty() => {
                    return bad(format!("model {}: baseline models take no embeddings", m.id));
                }
                ModelKind::Probe if m.embeddings.is_empty() => {
                    return bad(format!("model {}: probe models need an embedding file", m.id));
                }
                _ => {}
            }
            for (ds, p) in &m.embeddings {
                if !ids.contains(ds.as_str()) {
                    return bad(format!("model {}: embeddings for unknown dataset {ds:?}", m.id));
                }
                if !p.is_file() {
                    return bad(format!("model {}: no such embedding file {}", m.id, p.display()));
                }
            }
        }
        Ok(())
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetConfig> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn gap_classes_for(&self, d: &DatasetConfig) -> (String, String) {
        self.gap_classes.clone().unwrap_or_else(|| {
            let labels: Vec<String> = d.alphabet_set().into_iter().collect();
            (labels[0].clone(), labels[1].clone())
        })
    }

    /// Datasets a model can be trained on.
    pub fn trainable(&self, m: &ModelConfig, dataset: &str) -> bool {
        m.kind == ModelKind::Baseline || m.embeddings.contains_key(dataset)
    }
}

/// Ids become path components, so keep them tame.
fn check_id(what: &str, id: &str) -> Result<()> {
    let ok =
        !id.is_empty() && id != "." && id != ".." && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} id {id:?} must be non-empty and use only letters, digits, '-', '_' or '.'"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "c.jsonl", "");
        let p = write(
            dir.path(),
            "run.json",
            r#"{"datasets":[{"id":"d","path":"c.jsonl","alphabet":["F","M"]}],
                "models":[{"id":"ngram","kind":"baseline"}]}"#,
        );
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.output_root, dir.path().join("out"));
        assert_eq!(cfg.datasets[0].chunking.char_limit, 1000);
        assert_eq!(cfg.models[0].train_config(7).seed, 7);
        assert_eq!(cfg.gap_classes_for(&cfg.datasets[0]), ("F".into(), "M".into()));
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "c.jsonl", "");
        let cases = [
            r#"{"datasets":[{"id":"d","path":"missing.jsonl","alphabet":["F","M"]}],"models":[{"id":"m","kind":"baseline"}]}"#,
            r#"{"datasets":[{"id":"d","path":"c.jsonl","alphabet":["F","M"]}],"models":[{"id":"m","kind":"baseline"}],"seeds":[]}"#,
            r#"{"datasets":[{"id":"d","path":"c.jsonl","alphabet":["F","M"]}],"models":[{"id":"p","kind":"probe"}]}"#,
            r#"{"datasets":[{"id":"../x","path":"c.jsonl","alphabet":["F","M"]}],"models":[{"id":"m","kind":"baseline"}]}"#,
            r#"{"datasets":[{"id":"d","path":"c.jsonl","alphabet":["F"]}],"models":[{"id":"m","kind":"baseline"}]}"#,
            r#"{"datasets":[{"id":"d","path":"c.jsonl","alphabet":["F","M"],"cleaning":{"strip_patterns":["("]}}],"models":[{"id":"m","kind":"baseline"}]}"#,
            r#"{"datasets":[],"models":[{"id":"m","kind":"baseline"}],"surprise":1}"#,
        ];
        for body in cases {
            let p = write(dir.path(), "run.json", body);
            let err = RunConfig::load(&p).unwrap_err();
            assert_eq!(err.kind(), recipro_core::error::ErrorKind::Validation, "{body}: {err}");
        }
    }
}
