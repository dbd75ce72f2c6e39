//! Metrics over prediction traces: confusion-matrix scores, per-class
//! recall gaps, cross-dataset transfer and Cohen's kappa agreement.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FittedFeaturizer;
use crate::model::{EmbeddingTable, FeatureSpace, LinearModel};
use crate::pipeline::ProfilingExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub example_id: String,
    pub truth: String,
    pub predicted: String,
    pub score: f64,
}

/// Predictions of one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub model_id: String,
    pub dataset_id: String,
    pub entries: Vec<TraceEntry>,
}

#[derive(Serialize, Deserialize)]
struct TraceLine<'a> {
    model_id: &'a str,
    dataset_id: &'a str,
    example_id: &'a str,
    truth: &'a str,
    predicted: &'a str,
    score: f64,
}

impl PredictionTrace {
    pub fn new(model_id: &str, dataset_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            dataset_id: dataset_id.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, example_id: &str, truth: &str, predicted: &str, score: f64) {
        self.entries.push(TraceEntry {
            example_id: example_id.into(),
            truth: truth.into(),
            predicted: predicted.into(),
            score,
        });
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.example_id.as_str()) {
                return Err(Error::Malformed(format!(
                    "duplicate example id {:?} in trace",
                    e.example_id
                )));
            }
        }
        Ok(())
    }

    /// One JSON object per line with keys `model_id`, `dataset_id`,
    /// `example_id`, `truth`, `predicted`, `score`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let line = TraceLine {
                model_id: &self.model_id,
                dataset_id: &self.dataset_id,
                example_id: &e.example_id,
                truth: &e.truth,
                predicted: &e.predicted,
                score: e.score,
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("trace line serializes"));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut trace: Option<PredictionTrace> = None;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let l: TraceLine =
                serde_json::from_str(line).map_err(|e| Error::Malformed(format!("trace line {}: {e}", n + 1)))?;
            let t = trace.get_or_insert_with(|| PredictionTrace::new(l.model_id, l.dataset_id));
            if t.model_id != l.model_id || t.dataset_id != l.dataset_id {
                return Err(Error::Malformed(format!(
                    "trace line {} mixes models or datasets",
                    n + 1
                )));
            }
            t.push(l.example_id, l.truth, l.predicted, l.score);
        }
        let trace = trace.ok_or_else(|| Error::EmptyInput("trace file has no entries".into()))?;
        trace.validate()?;
        Ok(trace)
    }
}

/// Rows are truths, columns are predictions, both in `labels` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Labels are the sorted union of truths and predictions.
    pub fn from_trace(trace: &PredictionTrace) -> Self {
        let labels: Vec<String> = trace
            .entries
            .iter()
            .flat_map(|e| [e.truth.clone(), e.predicted.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pos: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for e in &trace.entries {
            counts[pos[e.truth.as_str()]][pos[e.predicted.as_str()]] += 1;
        }
        Self { labels, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Recall of every label that occurs among the truths.
    pub per_class_recall: BTreeMap<String, f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Balanced accuracy is the mean recall over labels present in the truths.
/// Macro precision, recall and F1 average over the union of truth and
/// predicted labels, with 0/0 taken as 0.
pub fn compute_metrics(trace: &PredictionTrace) -> Result<MetricsReport> {
    if trace.entries.is_empty() {
        return Err(Error::EmptyInput(format!(
            "trace {}/{} has no entries",
            trace.model_id, trace.dataset_id
        )));
    }
    let cm = ConfusionMatrix::from_trace(trace);
    let k = cm.labels.len();
    let mut per_class_recall = BTreeMap::new();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    let mut correct = 0u64;
    for i in 0..k {
        let tp = cm.counts[i][i];
        let support = cm.row_sum(i);
        let predicted = cm.col_sum(i);
        correct += tp;
        let recall = ratio(tp, support);
        if support > 0 {
            per_class_recall.insert(cm.labels[i].clone(), recall);
        }
        p_sum += ratio(tp, predicted);
        r_sum += recall;
        // 2PR/(P+R) in integer form
        f_sum += ratio(2 * tp, support + predicted);
    }
    let balanced_accuracy = per_class_recall.values().sum::<f64>() / per_class_recall.len() as f64;
    Ok(MetricsReport {
        balanced_accuracy,
        accuracy: ratio(correct, cm.total()),
        macro_precision: p_sum / k as f64,
        macro_recall: r_sum / k as f64,
        macro_f1: f_sum / k as f64,
        per_class_recall,
    })
}

/// `recall(class_a) - recall(class_b)` as a fraction; multiply by 100 for
/// percentage points.
pub fn per_class_gap(trace: &PredictionTrace, class_a: &str, class_b: &str) -> Result<f64> {
    let m = compute_metrics(trace)?;
    let get = |c: &str| {
        m.per_class_recall
            .get(c)
            .copied()
            .ok_or_else(|| Error::AbsentClass(c.to_string()))
    };
    Ok(get(class_a)? - get(class_b)?)
}

/// Sample mean and standard deviation (n - 1 denominator). A single value
/// has standard deviation 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// A trained model plus whatever it needs to turn an example into a vector.
#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model_id: String,
    pub train_dataset: String,
    pub model: LinearModel,
    /// Required for hashed feature spaces.
    pub featurizer: Option<FittedFeaturizer>,
}

/// A prepared test set, with embeddings per encoder when available.
#[derive(Debug, Clone, Default)]
pub struct EvalSet {
    pub dataset_id: String,
    pub examples: Vec<ProfilingExample>,
    pub embeddings: BTreeMap<String, EmbeddingTable>,
}

impl TrainedClassifier {
    /// Score every example of `set`.
    pub fn predict_set(&self, set: &EvalSet) -> Result<PredictionTrace> {
        let mut trace = PredictionTrace::new(&self.model_id, &set.dataset_id);
        match &self.model.feature_space {
            FeatureSpace::Hashed { config_digest, .. } => {
                let f = self
                    .featurizer
                    .as_ref()
                    .ok_or_else(|| Error::FeatureSpace("hashed model without a featurizer".into()))?;
                if &f.config.digest() != config_digest {
                    return Err(Error::FeatureSpace("featurizer config differs from the model's".into()));
                }
                for ex in &set.examples {
                    let p = self.model.predict(&f.featurize(&ex.text))?;
                    trace.push(&ex.example_id, &ex.label, &p.label, p.score);
                }
            }
            FeatureSpace::Dense { source_model, dim } => {
                let table = set.embeddings.get(source_model).ok_or_else(|| {
                    Error::FeatureSpace(format!("no {source_model} embeddings for {}", set.dataset_id))
                })?;
                if table.dim != *dim {
                    return Err(Error::FeatureSpace(format!(
                        "embedding dim {} differs from model dim {dim}",
                        table.dim
                    )));
                }
                for ex in &set.examples {
                    let x = table
                        .dense(&ex.example_id)
                        .ok_or_else(|| Error::MissingEmbeddings(vec![ex.example_id.clone()]))?;
                    let p = self.model.predict(&x)?;
                    trace.push(&ex.example_id, &ex.label, &p.label, p.score);
                }
            }
        }
        Ok(trace)
    }
}

/// One transfer cell: metrics, or the reason the cell could not be scored.
pub type TransferCell = std::result::Result<MetricsReport, String>;

/// Metrics keyed by (train dataset, eval dataset).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferMatrix {
    pub cells: BTreeMap<(String, String), TransferCell>,
    pub traces: BTreeMap<(String, String), PredictionTrace>,
}

/// Score every classifier on every set without retraining.
pub fn transfer_eval(models: &[TrainedClassifier], datasets: &[EvalSet]) -> TransferMatrix {
    let mut matrix = TransferMatrix::default();
    for clf in models {
        for set in datasets {
            let key = (clf.train_dataset.clone(), set.dataset_id.clone());
            let cell = clf.predict_set(set).and_then(|trace| {
                let m = compute_metrics(&trace)?;
                matrix.traces.insert(key.clone(), trace);
                Ok(m)
            });
            matrix.cells.insert(key, cell.map_err(|e| e.to_string()));
        }
    }
    matrix
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementMode {
    /// Compare correct/incorrect indicators.
    #[default]
    Correctness,
    /// Compare predicted labels.
    Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub model_pair: (String, String),
    pub mode: AgreementMode,
    /// Observed agreement.
    pub p: f64,
    /// Chance agreement from the two models' marginal rates.
    pub r: f64,
    /// `(p - r) / (1 - r)`; `None` when `r == 1` (degenerate).
    pub kappa: Option<f64>,
}

/// Cohen's kappa between two traces over the same example set.
///
/// Computed from integer counts: with `n` examples, `a` agreements and
/// `s = sum_c n_i(c) * n_j(c)`, `p = a/n`, `r = s/n^2` and
/// `kappa = (a*n - s) / (n^2 - s)`. The single final division makes the
/// result exactly symmetric and exactly 1 for identical traces.
pub fn kappa(trace_i: &PredictionTrace, trace_j: &PredictionTrace, mode: AgreementMode) -> Result<AgreementResult> {
    let key = |e: &TraceEntry| -> String {
        match mode {
            AgreementMode::Correctness => (e.truth == e.predicted).to_string(),
            AgreementMode::Labels => e.predicted.clone(),
        }
    };
    let by_id: HashMap<&str, &TraceEntry> = trace_j.entries.iter().map(|e| (e.example_id.as_str(), e)).collect();
    if by_id.len() != trace_j.entries.len() || trace_i.entries.len() != trace_j.entries.len() {
        return Err(Error::ExampleSetMismatch(format!(
            "{} has {} entries, {} has {}",
            trace_i.model_id,
            trace_i.entries.len(),
            trace_j.model_id,
            trace_j.entries.len()
        )));
    }
    if trace_i.entries.is_empty() {
        return Err(Error::EmptyInput("kappa over empty traces".into()));
    }
    let mut agree: u128 = 0;
    let mut marg_i: BTreeMap<String, u128> = BTreeMap::new();
    let mut marg_j: BTreeMap<String, u128> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for ei in &trace_i.entries {
        let ej = by_id.get(ei.example_id.as_str()).ok_or_else(|| {
            Error::ExampleSetMismatch(format!("{:?} missing from {}", ei.example_id, trace_j.model_id))
        })?;
        if !seen.insert(ei.example_id.as_str()) {
            return Err(Error::ExampleSetMismatch(format!("duplicate id {:?}", ei.example_id)));
        }
        let (ki, kj) = (key(ei), key(ej));
        if ki == kj {
            agree += 1;
        }
        *marg_i.entry(ki).or_insert(0) += 1;
        *marg_j.entry(kj).or_insert(0) += 1;
    }
    let n = trace_i.entries.len() as u128;
    let chance: u128 = marg_i
        .iter()
        .map(|(c, ci)| ci * marg_j.get(c).copied().unwrap_or(0))
        .sum();
    let n2 = n * n;
    let kappa = (chance != n2).then(|| (agree as f64 * n as f64 - chance as f64) / (n2 - chance) as f64);
    Ok(AgreementResult {
        model_pair: (trace_i.model_id.clone(), trace_j.model_id.clone()),
        mode,
        p: agree as f64 / n as f64,
        r: chance as f64 / n2 as f64,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(model: &str, truths: &[&str], preds: &[&str]) -> PredictionTrace {
        let mut t = PredictionTrace::new(model, "d");
        for (i, (tr, pr)) in truths.iter().zip(preds).enumerate() {
            t.push(&format!("e{i}"), tr, pr, 0.5);
        }
        t
    }

    #[test]
    fn hand_worked_metrics() {
        let m = compute_metrics(&trace("m", &["F", "M", "M", "M"], &["F", "F", "M", "M"])).unwrap();
        assert_eq!(m.per_class_recall["F"], 1.0);
        assert!((m.per_class_recall["M"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.balanced_accuracy - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.75);
        // precision F = 1/2, M = 1; f1 F = 2/3, M = 4/5
        assert!((m.macro_precision - 0.75).abs() < 1e-15);
        assert!((m.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let m = compute_metrics(&trace("m", &["F", "M", "X"], &["F", "M", "X"])).unwrap();
        for v in [
            m.balanced_accuracy,
            m.accuracy,
            m.macro_precision,
            m.macro_recall,
            m.macro_f1,
        ] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(compute_metrics(&PredictionTrace::new("m", "d")).is_err());
    }

    #[test]
    fn zero_precision_convention() {
        // nothing predicted as M
        let m = compute_metrics(&trace("m", &["F", "M"], &["F", "F"])).unwrap();
        assert_eq!(m.macro_precision, 0.25);
        assert_eq!(m.balanced_accuracy, 0.5);
    }

    #[test]
    fn gap_definition() {
        // F recall 0.8, M recall 0.7
        let mut truths = vec!["F"; 10];
        truths.extend(vec!["M"; 10]);
        let mut preds = vec!["F"; 8];
        preds.extend(vec!["M"; 2]);
        preds.extend(vec!["M"; 7]);
        preds.extend(vec!["F"; 3]);
        let t = trace("m", &truths, &preds);
        let gap = per_class_gap(&t, "F", "M").unwrap();
        assert!((100.0 * gap - 10.0).abs() < 1e-9);
        assert_eq!(per_class_gap(&t, "M", "F").unwrap(), -gap);
        assert!(matches!(per_class_gap(&t, "F", "X"), Err(Error::AbsentClass(_))));
        let sym = trace("m", &["F", "M"], &["F", "M"]);
        assert_eq!(per_class_gap(&sym, "F", "M").unwrap(), 0.0);
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn kappa_hand_example() {
        // correctness vectors [1,1,0,0] and [1,0,1,0]
        let truth = ["F", "F", "F", "F"];
        let a = trace("a", &truth, &["F", "F", "M", "M"]);
        let b = trace("b", &truth, &["F", "M", "F", "M"]);
        let k = kappa(&a, &b, AgreementMode::Correctness).unwrap();
        assert_eq!(k.p, 0.5);
        assert_eq!(k.r, 0.5);
        assert_eq!(k.kappa, Some(0.0));
        assert_eq!(k.model_pair, ("a".to_string(), "b".to_string()));
    }

    #[test]
    fn kappa_identity_and_degenerate() {
        let a = trace("a", &["F", "M", "M"], &["F", "F", "M"]);
        assert_eq!(kappa(&a, &a, AgreementMode::Correctness).unwrap().kappa, Some(1.0));
        assert_eq!(kappa(&a, &a, AgreementMode::Labels).unwrap().kappa, Some(1.0));
        let all_right = trace("c", &["F", "M"], &["F", "M"]);
        let k = kappa(&all_right, &all_right, AgreementMode::Correctness).unwrap();
        assert_eq!(k.r, 1.0);
        assert_eq!(k.kappa, None);
    }

    #[test]
    fn kappa_requires_same_examples() {
        let a = trace("a", &["F", "M"], &["F", "M"]);
        let mut b = trace("b", &["F", "M"], &["F", "M"]);
        b.entries[1].example_id = "other".into();
        assert!(matches!(
            kappa(&a, &b, AgreementMode::Labels),
            Err(Error::ExampleSetMismatch(_))
        ));
        let c = trace("c", &["F"], &["F"]);
        assert!(kappa(&a, &c, AgreementMode::Labels).is_err());
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let t = trace("m", &["F", "M"], &["M", "M"]);
        let text = t.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"model_id\":\"m\""));
        assert_eq!(PredictionTrace::from_jsonl(&text).unwrap(), t);
        assert!(PredictionTrace::from_jsonl("").is_err());
    }
}
