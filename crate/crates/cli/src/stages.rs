//! The experiment stages.
//!
//! ```text
//! ingest(ds) -> stats(ds)
//!            -> prepare(ds) -> train(model, ds, seed) -> eval(model, ds, seed) -> agree(ds, seed)
//!                                                      -> transfer(model, seed)
//! eval + transfer + agree + prepare -> report
//! ```
//!
//! Each `*_digest` function verifies the upstream manifests it depends on
//! and returns the input digest of its own stage, so a stage can only run
//! on upstream outputs that are current for the present configuration.

use std::collections::BTreeMap;

use serde::Serialize;

use recipro_core::corpus::{self, Cleaner, UtteranceRecord};
use recipro_core::digest::{sha256_hex, Fingerprint};
use recipro_core::eval::{
    compute_metrics, kappa, per_class_gap, transfer_eval, EvalSet, PredictionTrace, TrainedClassifier,
};
use recipro_core::features::{self, FittedFeaturizer, SparseVector};
use recipro_core::model::{train_probe, train_with_history, EmbeddingTable, FeatureSpace, LinearModel};
use recipro_core::pipeline::{
    balance_classes, chunk_utterances, split_by_recipient, verify_split, ProfilingExample, Split,
};
use recipro_core::report::{
    chart_files, table_files, AgreementRecord, DatasetStatsRow, GapRecord, RunArtifacts, SeedMetrics, TransferRecord,
};
use recipro_core::Error;

use crate::config::{DatasetConfig, ModelConfig, ModelKind, RunConfig};
use crate::manifest::{Manifest, Outputs, StageError, StageResult, Store, UnitStatus};

/// Unit selection from the command line; empty lists select everything.
#[derive(Debug, Clone, Default)]
pub struct Filters {
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    pub seeds: Vec<u64>,
}

impl Filters {
    fn dataset(&self, id: &str) -> bool {
        self.datasets.is_empty() || self.datasets.iter().any(|d| d == id)
    }
    fn model(&self, id: &str) -> bool {
        self.models.is_empty() || self.models.iter().any(|m| m == id)
    }
    fn seed(&self, s: u64) -> bool {
        self.seeds.is_empty() || self.seeds.contains(&s)
    }
}

pub struct Context {
    pub cfg: RunConfig,
    pub store: Store,
    pub filters: Filters,
    pub force: bool,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serializes")
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &str) -> StageResult<Vec<T>> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Malformed(format!("{what} is not UTF-8")))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Malformed(format!("{what}: {e}")).into()))
        .collect()
}

fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> StageResult<T> {
    serde_json::from_value(v).map_err(|e| StageError::from(Error::Malformed(format!("manifest summary: {e}"))))
}

fn file_sha(path: &std::path::Path) -> StageResult<String> {
    Ok(sha256_hex(std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

fn train_unit(model: &str, ds: &str, seed: u64) -> String {
    format!("{model}__{ds}__seed{seed}")
}

fn prepared_path(ds: &str, split: Split) -> String {
    format!("prepared/{ds}/{}.jsonl", split.as_str())
}

fn model_dir(model: &str, ds: &str, seed: u64) -> String {
    format!("models/{model}/{ds}/seed{seed}")
}

impl Context {
    fn datasets(&self) -> impl Iterator<Item = &DatasetConfig> {
        self.cfg.datasets.iter().filter(|d| self.filters.dataset(&d.id))
    }

    fn models(&self) -> impl Iterator<Item = &ModelConfig> {
        self.cfg.models.iter().filter(|m| self.filters.model(&m.id))
    }

    fn seeds(&self) -> Vec<u64> {
        self.cfg
            .seeds
            .iter()
            .copied()
            .filter(|s| self.filters.seed(*s))
            .collect()
    }

    // ---- digests -------------------------------------------------------

    fn ingest_digest(&self, d: &DatasetConfig) -> StageResult<String> {
        Ok(Fingerprint::new()
            .part("ingest")
            .part(&d.id)
            .part(file_sha(&d.path)?)
            .part(json(&d.alphabet_set()))
            .hex())
    }

    fn verified_ingest(&self, d: &DatasetConfig) -> StageResult<Manifest> {
        self.store.require("ingest", &d.id, &self.ingest_digest(d)?)
    }

    fn stats_digest(&self, d: &DatasetConfig) -> StageResult<String> {
        let up = self.verified_ingest(d)?;
        Ok(Fingerprint::new()
            .part("stats")
            .part(up.output_digest())
            .part(json(&d.cleaning))
            .hex())
    }

    fn prepare_digest(&self, d: &DatasetConfig) -> StageResult<String> {
        let up = self.verified_ingest(d)?;
        Ok(Fingerprint::new()
            .part("prepare")
            .part(up.output_digest())
            .part(json(&d.cleaning))
            .part(json(&d.chunking))
            .part(json(&d.balance))
            .part(json(&d.split))
            .hex())
    }

    fn verified_prepare(&self, d: &DatasetConfig) -> StageResult<Manifest> {
        self.store.require("prepare", &d.id, &self.prepare_digest(d)?)
    }

    fn train_digest(&self, m: &ModelConfig, d: &DatasetConfig, seed: u64) -> StageResult<String> {
        let up = self.verified_prepare(d)?;
        let mut fp = Fingerprint::new();
        fp.part("train")
            .part(up.output_digest())
            .part(&m.id)
            .part(json(&m.kind))
            .part(json(&m.train_config(seed)));
        match m.kind {
            ModelKind::Baseline => {
                fp.part(json(&self.cfg.featurizer));
            }
            ModelKind::Probe => {
                fp.part(m.encoder_name()).part(file_sha(&m.embeddings[&d.id])?);
            }
        }
        Ok(fp.hex())
    }

    fn verified_train(&self, m: &ModelConfig, d: &DatasetConfig, seed: u64) -> StageResult<Manifest> {
        self.store.require(
            "train",
            &train_unit(&m.id, &d.id, seed),
            &self.train_digest(m, d, seed)?,
        )
    }

    fn eval_digest(&self, m: &ModelConfig, d: &DatasetConfig, seed: u64) -> StageResult<String> {
        let train = self.verified_train(m, d, seed)?;
        let prep = self.verified_prepare(d)?;
        Ok(Fingerprint::new()
            .part("eval")
            .part(train.output_digest())
            .part(prep.output_digest())
            .part(json(&self.cfg.gap_classes_for(d)))
            .hex())
    }

    fn verified_eval(&self, m: &ModelConfig, d: &DatasetConfig, seed: u64) -> StageResult<Manifest> {
        self.store
            .require("eval", &train_unit(&m.id, &d.id, seed), &self.eval_digest(m, d, seed)?)
    }

    fn transfer_digest(&self, m: &ModelConfig, seed: u64) -> StageResult<String> {
        let mut fp = Fingerprint::new();
        fp.part("transfer").part(&m.id);
        for d in &self.cfg.datasets {
            fp.part(&d.id).part(self.verified_prepare(d)?.output_digest());
            if self.cfg.trainable(m, &d.id) {
                fp.part(self.verified_train(m, d, seed)?.output_digest());
            }
            if let Some(p) = m.embeddings.get(&d.id) {
                fp.part(file_sha(p)?);
            }
        }
        Ok(fp.hex())
    }

    fn agree_digest(&self, d: &DatasetConfig, seed: u64) -> StageResult<String> {
        let mut fp = Fingerprint::new();
        fp.part("agree").part(&d.id).part(json(&self.cfg.agreement_mode));
        for m in self.cfg.models.iter().filter(|m| self.cfg.trainable(m, &d.id)) {
            fp.part(&m.id).part(self.verified_eval(m, d, seed)?.output_digest());
        }
        Ok(fp.hex())
    }

    // ---- loaders ------------------------------------------------------

    fn load_split(&self, ds: &str, split: Split) -> StageResult<Vec<ProfilingExample>> {
        parse_jsonl(
            &self.store.read_output(&prepared_path(ds, split))?,
            &prepared_path(ds, split),
        )
    }

    fn load_embeddings(&self, m: &ModelConfig, ds: &str) -> StageResult<Option<EmbeddingTable>> {
        match m.embeddings.get(ds) {
            Some(p) => Ok(Some(EmbeddingTable::load(p, m.encoder_name())?)),
            None => Ok(None),
        }
    }

    fn load_classifier(&self, m: &ModelConfig, ds: &str, seed: u64) -> StageResult<TrainedClassifier> {
        let dir = model_dir(&m.id, ds, seed);
        let model = LinearModel::from_bytes(&self.store.read_output(&format!("{dir}/model.rpmod"))?)?;
        let featurizer = match m.kind {
            ModelKind::Baseline => Some(FittedFeaturizer::from_bytes(
                &self.store.read_output(&format!("{dir}/featurizer.rpfeat"))?,
            )?),
            ModelKind::Probe => None,
        };
        Ok(TrainedClassifier {
            model_id: m.id.clone(),
            train_dataset: ds.to_string(),
            model,
            featurizer,
        })
    }

    fn eval_set(&self, m: &ModelConfig, d: &DatasetConfig) -> StageResult<EvalSet> {
        let mut set = EvalSet {
            dataset_id: d.id.clone(),
            examples: self.load_split(&d.id, Split::Test)?,
            embeddings: BTreeMap::new(),
        };
        if let Some(t) = self.load_embeddings(m, &d.id)? {
            set.embeddings.insert(m.encoder_name().to_string(), t);
        }
        Ok(set)
    }

    fn load_records(&self, d: &DatasetConfig) -> StageResult<Vec<UtteranceRecord>> {
        let rel = format!("ingest/{}/records.jsonl", d.id);
        let records: Vec<UtteranceRecord> = parse_jsonl(&self.store.read_output(&rel)?, &rel)?;
        Ok(records)
    }

    fn cleaned_labeled(&self, d: &DatasetConfig) -> StageResult<(Vec<UtteranceRecord>, usize)> {
        let cleaner = Cleaner::new(&d.cleaning)?;
        let labeled = corpus::filter_labeled(self.load_records(d)?);
        Ok(corpus::clean_records(labeled, &cleaner))
    }

    // ---- stages -------------------------------------------------------

    pub fn ingest(&self) -> StageResult<Vec<UnitStatus>> {
        let mut status = Vec::new();
        for d in self.datasets() {
            let digest = self.ingest_digest(d)?;
            let (s, _) = self.store.run_unit("ingest", &d.id, &digest, self.force, || {
                let ing = corpus::ingest(&d.path, &d.id, &d.alphabet_set())?;
                let summary = serde_json::json!({
                    "total_lines": ing.total_lines,
                    "accepted": ing.records.len(),
                    "rejected": ing.rejections.len(),
                    "reject_counts": ing.reject_counts(),
                });
                log::info!(
                    "ingest {}: {} accepted, {} rejected",
                    d.id,
                    ing.records.len(),
                    ing.rejections.len()
                );
                let outputs: Outputs = vec![
                    (format!("ingest/{}/records.jsonl", d.id), jsonl(&ing.records)),
                    (format!("ingest/{}/rejections.jsonl", d.id), jsonl(&ing.rejections)),
                ];
                Ok((outputs, summary))
            })?;
            status.push(s);
        }
        Ok(status)
    }

    pub fn stats(&self) -> StageResult<Vec<UnitStatus>> {
        let mut status = Vec::new();
        for d in self.datasets() {
            let digest = self.stats_digest(d)?;
            let (s, _) = self.store.run_unit("stats", &d.id, &digest, self.force, || {
                let (records, dropped) = self.cleaned_labeled(d)?;
                let stats = corpus::corpus_stats(&records);
                let summary = serde_json::json!({ "stats": stats, "dropped_empty_after_cleaning": dropped });
                let outputs: Outputs = vec![
                    (format!("stats/{}/stats.csv", d.id), stats.to_csv().into_bytes()),
                    (format!("stats/{}/stats.txt", d.id), stats.to_string().into_bytes()),
                ];
                Ok((outputs, summary))
            })?;
            status.push(s);
        }
        Ok(status)
    }

    /// clean -> chunk -> balance -> split, then a leakage check that
    /// aborts on any overlap.
    pub fn prepare(&self) -> StageResult<Vec<UnitStatus>> {
        let mut status = Vec::new();
        for d in self.datasets() {
            let digest = self.prepare_digest(d)?;
            let (s, _) = self.store.run_unit("prepare", &d.id, &digest, self.force, || {
                let (records, dropped) = self.cleaned_labeled(d)?;
                let stats = corpus::corpus_stats(&records);
                let chunks = chunk_utterances(&records, &d.chunking)?;
                let balanced = balance_classes(&chunks, &d.alphabet_set(), &d.balance)?;
                let (assignment, sets) = split_by_recipient(&balanced, &d.split)?;
                let diag = verify_split(&assignment, &sets);
                if !diag.is_clean() {
                    return Err(Error::Leakage(diag.overlap.clone()).into());
                }
                let mean_chars = if balanced.is_empty() {
                    0.0
                } else {
                    balanced.iter().map(|e| e.char_length as f64).sum::<f64>() / balanced.len() as f64
                };
                let row = DatasetStatsRow {
                    dataset_id: d.id.clone(),
                    utterances: stats.utterance_count,
                    recipients: stats.recipient_count,
                    recipients_per_label: stats.recipients_per_label.clone(),
                    balanced_examples: balanced.len(),
                    mean_chars_balanced: mean_chars,
                    recipient_splits: diag.recipient_sizes,
                    example_splits: diag.example_sizes,
                };
                let split_manifest = serde_json::json!({
                    "dataset_id": d.id,
                    "dropped_empty_after_cleaning": dropped,
                    "chunks": chunks.len(),
                    "balanced": balanced.len(),
                    "assignment": assignment,
                    "diagnostics": diag,
                });
                let mut outputs: Outputs = Split::ALL
                    .iter()
                    .map(|s| (prepared_path(&d.id, *s), jsonl(sets.get(*s))))
                    .collect();
                outputs.push((
                    format!("prepared/{}/split_manifest.json", d.id),
                    serde_json::to_vec_pretty(&split_manifest).expect("serializes"),
                ));
                log::info!(
                    "prepare {}: {} chunks, {} after balancing, splits {:?}",
                    d.id,
                    chunks.len(),
                    balanced.len(),
                    diag.example_sizes
                );
                Ok((outputs, serde_json::to_value(&row).expect("serializes")))
            })?;
            status.push(s);
        }
        Ok(status)
    }

    pub fn train(&self) -> StageResult<Vec<UnitStatus>> {
        let mut status = Vec::new();
        for m in self.models() {
            for d in self.datasets().filter(|d| self.cfg.trainable(m, &d.id)) {
                for seed in self.seeds() {
                    let digest = self.train_digest(m, d, seed)?;
                    let unit = train_unit(&m.id, &d.id, seed);
                    let (s, _) = self
                        .store
                        .run_unit("train", &unit, &digest, self.force, || self.train_one(m, d, seed))?;
                    status.push(s);
                }
            }
        }
        Ok(status)
    }

    fn train_one(&self, m: &ModelConfig, d: &DatasetConfig, seed: u64) -> StageResult<(Outputs, serde_json::Value)> {
        let train = self.load_split(&d.id, Split::Train)?;
        let tc = m.train_config(seed);
        let dir = model_dir(&m.id, &d.id, seed);
        let mut outputs = Vec::new();
        let (model, objective) = match m.kind {
            ModelKind::Baseline => {
                let texts: Vec<&str> = train.iter().map(|e| e.text.as_str()).collect();
                let feat = features::fit(&texts, &self.cfg.featurizer)?;
                let data: Vec<(SparseVector, String)> = train
                    .iter()
                    .map(|e| (feat.featurize(&e.text), e.label.clone()))
                    .collect();
                let space = FeatureSpace::Hashed {
                    dims: self.cfg.featurizer.hash_dims,
                    config_digest: self.cfg.featurizer.digest(),
                };
                let (model, hist) = train_with_history(&data, space, &tc)?;
                outputs.push((format!("{dir}/featurizer.rpfeat"), feat.to_bytes()));
                (model, hist.epoch_objective)
            }
            ModelKind::Probe => {
                let table = self.load_embeddings(m, &d.id)?.expect("probe datasets have embeddings");
                let labels: BTreeMap<String, String> =
                    train.iter().map(|e| (e.example_id.clone(), e.label.clone())).collect();
                (train_probe(&table, &labels, &tc)?, Vec::new())
            }
        };
        outputs.push((format!("{dir}/model.rpmod"), model.to_bytes()));
        let summary = serde_json::json!({
            "train_examples": train.len(),
            "label_order": model.label_order,
            "epoch_objective": objective,
        });
        Ok((outputs, summary))
    }

    pub fn eval(&self) -> StageResult<Vec<UnitStatus>> {
        let mut status = Vec::new();
        for m in self.models() {
            for d in self.datasets().filter(|d| self.cfg.trainable(m, &d.id)) {
                for seed in self.seeds() {
                    let digest = self.eval_digest(m, d, seed)?;
                    let unit = train_unit(&m.id, &d.id, seed);
                    let (s, _) = self.store.run_unit("eval", &unit, &digest, self.force, || {
                        let clf = self.load_classifier(m, &d.id, seed)?;
                        let trace = clf.predict_set(&self.eval_set(m, d)?)?;
                        let report = compute_metrics(&trace)?;
                        let (a, b) = self.cfg.gap_classes_for(d);
                        let gap = per_class_gap(&trace, &a, &b).ok().map(|gap| GapRecord {
                            model_id: m.id.clone(),
                            dataset_id: d.id.clone(),
                            seed,
                            class_a: a.clone(),
                            class_b: b.clone(),
                            gap,
                        });
                        let metrics = SeedMetrics {
                            model_id: m.id.clone(),
                            dataset_id: d.id.clone(),
                            seed,
                            report,
                        };
                        log::info!("eval {unit}: balanced accuracy {:.4}", metrics.report.balanced_accuracy);
                        let summary = serde_json::json!({ "metrics": metrics, "gap": gap });
                        let outputs: Outputs = vec![
                            (
                                format!("traces/{}/{}/seed{seed}.jsonl", m.id, d.id),
                                trace.to_jsonl().into_bytes(),
                            ),
                            (
                                format!("eval/{}/{}/seed{seed}.json", m.id, d.id),
                                serde_json::to_vec_pretty(&summary).expect("serializes"),
                            ),
                        ];
                        Ok((outputs, summary))
                    })?;
                    status.push(s);
                }
            }
        }
        Ok(status)
    }

    pub fn transfer(&self) -> StageResult<Vec<UnitStatus>> {
        let mut status = Vec::new();
        for m in self.models() {
            for seed in self.seeds() {
                let digest = self.transfer_digest(m, seed)?;
                let unit = format!("{}__seed{seed}", m.id);
                let (s, _) = self.store.run_unit("transfer", &unit, &digest, self.force, || {
                    let mut classifiers = Vec::new();
                    let mut sets = Vec::new();
                    for d in &self.cfg.datasets {
                        if self.cfg.trainable(m, &d.id) {
                            classifiers.push(self.load_classifier(m, &d.id, seed)?);
                        }
                        sets.push(self.eval_set(m, d)?);
                    }
                    let matrix = transfer_eval(&classifiers, &sets);
                    let records: Vec<TransferRecord> = matrix
                        .cells
                        .into_iter()
                        .map(|((train_dataset, eval_dataset), cell)| TransferRecord {
                            model_id: m.id.clone(),
                            train_dataset,
                            eval_dataset,
                            seed,
                            note: cell.as_ref().err().cloned(),
                            report: cell.ok(),
                        })
                        .collect();
                    let value = serde_json::to_value(&records).expect("serializes");
                    let outputs: Outputs = vec![(
                        format!("transfer/{}/seed{seed}.json", m.id),
                        serde_json::to_vec_pretty(&value).expect("serializes"),
                    )];
                    Ok((outputs, value))
                })?;
                status.push(s);
            }
        }
        Ok(status)
    }

    /// Pairwise kappa between every model's trace on each dataset's test
    /// split, self-pairs included.
    pub fn agree(&self) -> StageResult<Vec<UnitStatus>> {
        let mut status = Vec::new();
        for d in self.datasets() {
            for seed in self.seeds() {
                let digest = self.agree_digest(d, seed)?;
                let unit = format!("{}__seed{seed}", d.id);
                let (s, _) = self.store.run_unit("agree", &unit, &digest, self.force, || {
                    let mut traces = Vec::new();
                    for m in self.cfg.models.iter().filter(|m| self.cfg.trainable(m, &d.id)) {
                        let rel = format!("traces/{}/{}/seed{seed}.jsonl", m.id, d.id);
                        let bytes = self.store.read_output(&rel)?;
                        let text = String::from_utf8(bytes).map_err(|_| Error::Malformed(rel.clone()))?;
                        traces.push(PredictionTrace::from_jsonl(&text)?);
                    }
                    let mut records = Vec::new();
                    for i in 0..traces.len() {
                        for j in i..traces.len() {
                            records.push(AgreementRecord {
                                dataset_id: d.id.clone(),
                                seed,
                                result: kappa(&traces[i], &traces[j], self.cfg.agreement_mode)?,
                            });
                        }
                    }
                    let value = serde_json::to_value(&records).expect("serializes");
                    let outputs: Outputs = vec![(
                        format!("agreement/{}/seed{seed}.json", d.id),
                        serde_json::to_vec_pretty(&value).expect("serializes"),
                    )];
                    Ok((outputs, value))
                })?;
                status.push(s);
            }
        }
        Ok(status)
    }

    /// Gather every upstream summary into [`RunArtifacts`]; also returns
    /// the combined input digest.
    fn collect_artifacts(&self) -> StageResult<(RunArtifacts, String)> {
        let mut fp = Fingerprint::new();
        fp.part("report");
        let mut a = RunArtifacts::default();
        for d in &self.cfg.datasets {
            let prep = self.verified_prepare(d)?;
            fp.part(prep.output_digest()).part(prep.summary.to_string());
            a.dataset_stats.push(parse(prep.summary.clone())?);
            a.manifests
                .insert(d.id.clone(), serde_json::to_value(&prep).expect("serializes"));
        }
        for m in &self.cfg.models {
            for seed in &self.cfg.seeds {
                for d in self.cfg.datasets.iter().filter(|d| self.cfg.trainable(m, &d.id)) {
                    let ev = self.verified_eval(m, d, *seed)?;
                    fp.part(ev.output_digest());
                    a.metrics.push(parse(ev.summary["metrics"].clone())?);
                    if !ev.summary["gap"].is_null() {
                        a.gaps.push(parse(ev.summary["gap"].clone())?);
                    }
                }
                let unit = format!("{}__seed{seed}", m.id);
                let tr = self
                    .store
                    .require("transfer", &unit, &self.transfer_digest(m, *seed)?)?;
                fp.part(tr.output_digest());
                a.transfer.extend(parse::<Vec<TransferRecord>>(tr.summary.clone())?);
            }
        }
        for d in &self.cfg.datasets {
            for seed in &self.cfg.seeds {
                let unit = format!("{}__seed{seed}", d.id);
                let ag = self.store.require("agree", &unit, &self.agree_digest(d, *seed)?)?;
                fp.part(ag.output_digest());
                a.agreement.extend(parse::<Vec<AgreementRecord>>(ag.summary.clone())?);
            }
        }
        Ok((a, fp.hex()))
    }

    /// Tables, charts and summary for the whole configured run, followed
    /// by `run_manifest.json` listing every stage manifest.
    pub fn report(&self) -> StageResult<Vec<UnitStatus>> {
        let (artifacts, digest) = self.collect_artifacts()?;
        if artifacts.is_empty() {
            return Err(Error::EmptyInput("no artifacts to report".into()).into());
        }
        let (s, _) = self.store.run_unit("report", "run", &digest, self.force, || {
            let mut outputs: Outputs = table_files(&artifacts)
                .into_iter()
                .chain(chart_files(&artifacts))
                .map(|(p, body)| (p, body.into_bytes()))
                .collect();
            outputs.push((
                "artifacts.json".into(),
                serde_json::to_vec_pretty(&artifacts).expect("serializes"),
            ));
            Ok((outputs, serde_json::Value::Null))
        })?;
        let run_manifest = serde_json::json!({ "stages": self.store.all_manifests() });
        let p = self.store.root.join("run_manifest.json");
        std::fs::write(&p, serde_json::to_vec_pretty(&run_manifest).expect("serializes"))
            .map_err(|e| Error::io(p, e))?;
        Ok(vec![s])
    }

    /// Every stage in order.
    pub fn run_all(&self) -> StageResult<Vec<UnitStatus>> {
        let mut status = self.ingest()?;
        status.extend(self.stats()?);
        status.extend(self.prepare()?);
        status.extend(self.train()?);
        status.extend(self.eval()?);
        status.extend(self.transfer()?);
        status.extend(self.agree()?);
        status.extend(self.report()?);
        Ok(status)
    }
}
