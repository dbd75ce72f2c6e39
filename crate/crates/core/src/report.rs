//! Tables, charts and a markdown summary for a finished run.
//!
//! Output layout under the report directory:
//!
//! ```text
//! tables/metrics.csv        per model x dataset, mean and std over seeds
//! tables/transfer.csv       per model x train dataset x eval dataset
//! tables/agreement.csv      per dataset x model pair
//! tables/gaps.csv           per model x dataset, recall gap in points
//! tables/dataset_stats.csv  one row per statistic, one column per dataset
//! charts/performance.svg    grouped bars with error whiskers
//! charts/gender_gap.svg     gap bars
//! charts/transfer_<model>.svg, charts/kappa_<dataset>.svg  heatmaps
//! summary.md
//! ```
//!
//! Standard deviations are sample standard deviations; a single seed gives
//! 0. Every numeric label in a chart is a `<text class="value">` element
//! whose `data-key` attribute names the table row it comes from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{mean_std, AgreementMode, AgreementResult, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub model_id: String,
    pub dataset_id: String,
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub model_id: String,
    pub train_dataset: String,
    pub eval_dataset: String,
    pub seed: u64,
    /// `None` when the cell could not be scored.
    pub report: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub dataset_id: String,
    pub seed: u64,
    pub result: AgreementResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub model_id: String,
    pub dataset_id: String,
    pub seed: u64,
    pub class_a: String,
    pub class_b: String,
    /// recall(class_a) - recall(class_b), as a fraction.
    pub gap: f64,
}

/// Dataset description before and after preparation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStatsRow {
    pub dataset_id: String,
    pub utterances: usize,
    pub recipients: usize,
    pub recipients_per_label: BTreeMap<String, usize>,
    pub balanced_examples: usize,
    pub mean_chars_balanced: f64,
    pub recipient_splits: [usize; 3],
    pub example_splits: [usize; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub metrics: Vec<SeedMetrics>,
    pub transfer: Vec<TransferRecord>,
    pub agreement: Vec<AgreementRecord>,
    pub gaps: Vec<GapRecord>,
    pub dataset_stats: Vec<DatasetStatsRow>,
    /// Pipeline manifests by dataset id.
    #[serde(default)]
    pub manifests: BTreeMap<String, serde_json::Value>,
}

impl RunArtifacts {
    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
            && self.transfer.is_empty()
            && self.agreement.is_empty()
            && self.gaps.is_empty()
            && self.dataset_stats.is_empty()
    }
}

/// `0.7729 (0.0145)`.
pub fn mean_std_cell(mean: f64, std: f64) -> String {
    format!("{mean:.4} ({std:.4})")
}

pub fn fmt_value(v: f64) -> String {
    format!("{v:.4}")
}

pub fn fmt_kappa(v: f64) -> String {
    format!("{v:.2}")
}

pub fn fmt_gap_points(v: f64) -> String {
    format!("{:+.2}", 100.0 * v)
}

/// File-name-safe form of an id.
pub fn slug(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

const METRIC_NAMES: [&str; 5] = ["balanced_accuracy", "accuracy", "f1", "precision", "recall"];

fn metric_values(r: &MetricsReport) -> [f64; 5] {
    [
        r.balanced_accuracy,
        r.accuracy,
        r.macro_f1,
        r.macro_precision,
        r.macro_recall,
    ]
}

/// Aggregated metrics for one (model, dataset) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model_id: String,
    pub dataset_id: String,
    pub seeds: usize,
    /// (mean, std) per metric, in `balanced_accuracy, accuracy, f1,
    /// precision, recall` order.
    pub values: [(f64, f64); 5],
}

pub fn aggregate_metrics(artifacts: &RunArtifacts) -> Vec<MetricsRow> {
    let mut grouped: BTreeMap<(&str, &str), Vec<[f64; 5]>> = BTreeMap::new();
    for m in &artifacts.metrics {
        grouped
            .entry((m.model_id.as_str(), m.dataset_id.as_str()))
            .or_default()
            .push(metric_values(&m.report));
    }
    grouped
        .into_iter()
        .map(|((model, dataset), runs)| {
            let values = std::array::from_fn(|k| mean_std(&runs.iter().map(|r| r[k]).collect::<Vec<_>>()));
            MetricsRow {
                model_id: model.to_string(),
                dataset_id: dataset.to_string(),
                seeds: runs.len(),
                values,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRow {
    pub model_id: String,
    pub train_dataset: String,
    pub eval_dataset: String,
    pub seeds: usize,
    /// Mean and std of balanced accuracy; `None` if no seed was scorable.
    pub balanced_accuracy: Option<(f64, f64)>,
    pub unavailable_seeds: usize,
}

pub fn aggregate_transfer(artifacts: &RunArtifacts) -> Vec<TransferRow> {
    let mut grouped: BTreeMap<(&str, &str, &str), (Vec<f64>, usize)> = BTreeMap::new();
    for t in &artifacts.transfer {
        let e = grouped
            .entry((t.model_id.as_str(), t.train_dataset.as_str(), t.eval_dataset.as_str()))
            .or_default();
        match &t.report {
            Some(r) => e.0.push(r.balanced_accuracy),
            None => e.1 += 1,
        }
    }
    grouped
        .into_iter()
        .map(|((m, tr, ev), (values, missing))| TransferRow {
            model_id: m.into(),
            train_dataset: tr.into(),
            eval_dataset: ev.into(),
            seeds: values.len() + missing,
            balanced_accuracy: (!values.is_empty()).then(|| mean_std(&values)),
            unavailable_seeds: missing,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub dataset_id: String,
    pub model_a: String,
    pub model_b: String,
    pub mode: AgreementMode,
    pub seeds: usize,
    pub p_mean: f64,
    pub r_mean: f64,
    /// Mean and std of kappa over non-degenerate seeds.
    pub kappa: Option<(f64, f64)>,
    pub degenerate_seeds: usize,
}

pub fn aggregate_agreement(artifacts: &RunArtifacts) -> Vec<AgreementRow> {
    type Acc = (Vec<f64>, Vec<f64>, Vec<f64>, usize);
    let mut grouped: BTreeMap<(&str, &str, &str, String), (AgreementMode, Acc)> = BTreeMap::new();
    for a in &artifacts.agreement {
        let r = &a.result;
        let mode = format!("{:?}", r.mode);
        let e = grouped
            .entry((
                a.dataset_id.as_str(),
                r.model_pair.0.as_str(),
                r.model_pair.1.as_str(),
                mode,
            ))
            .or_insert_with(|| (r.mode, Default::default()));
        e.1 .0.push(r.p);
        e.1 .1.push(r.r);
        match r.kappa {
            Some(k) => e.1 .2.push(k),
            None => e.1 .3 += 1,
        }
    }
    grouped
        .into_iter()
        .map(|((d, a, b, _), (mode, (p, r, k, deg)))| AgreementRow {
            dataset_id: d.into(),
            model_a: a.into(),
            model_b: b.into(),
            mode,
            seeds: p.len(),
            p_mean: mean_std(&p).0,
            r_mean: mean_std(&r).0,
            kappa: (!k.is_empty()).then(|| mean_std(&k)),
            degenerate_seeds: deg,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub model_id: String,
    pub dataset_id: String,
    pub class_a: String,
    pub class_b: String,
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate_gaps(artifacts: &RunArtifacts) -> Vec<GapRow> {
    let mut grouped: BTreeMap<(&str, &str, &str, &str), Vec<f64>> = BTreeMap::new();
    for g in &artifacts.gaps {
        grouped
            .entry((&g.model_id, &g.dataset_id, &g.class_a, &g.class_b))
            .or_default()
            .push(g.gap);
    }
    grouped
        .into_iter()
        .map(|((m, d, a, b), v)| {
            let (mean, std) = mean_std(&v);
            GapRow {
                model_id: m.into(),
                dataset_id: d.into(),
                class_a: a.into(),
                class_b: b.into(),
                seeds: v.len(),
                mean,
                std,
            }
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn metrics_csv(artifacts: &RunArtifacts) -> String {
    let mut out = String::from("model_id,dataset_id,seeds");
    for name in METRIC_NAMES {
        let _ = write!(out, ",{name}_mean,{name}_std");
    }
    out.push('\n');
    for row in aggregate_metrics(artifacts) {
        let _ = write!(
            out,
            "{},{},{}",
            csv_field(&row.model_id),
            csv_field(&row.dataset_id),
            row.seeds
        );
        for (m, s) in row.values {
            let _ = write!(out, ",{m:.6},{s:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn transfer_csv(artifacts: &RunArtifacts) -> String {
    let mut out = String::from(
        "model_id,train_dataset,eval_dataset,seeds,balanced_accuracy_mean,balanced_accuracy_std,unavailable_seeds\n",
    );
    for row in aggregate_transfer(artifacts) {
        let (m, s) = match row.balanced_accuracy {
            Some((m, s)) => (format!("{m:.6}"), format!("{s:.6}")),
            None => ("NA".into(), "NA".into()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{m},{s},{}",
            csv_field(&row.model_id),
            csv_field(&row.train_dataset),
            csv_field(&row.eval_dataset),
            row.seeds,
            row.unavailable_seeds
        );
    }
    out
}

pub fn agreement_csv(artifacts: &RunArtifacts) -> String {
    let mut out =
        String::from("dataset_id,model_a,model_b,mode,seeds,p_mean,r_mean,kappa_mean,kappa_std,degenerate_seeds\n");
    for row in aggregate_agreement(artifacts) {
        let (k, ks) = match row.kappa {
            Some((m, s)) => (format!("{m:.6}"), format!("{s:.6}")),
            None => ("NA".into(), "NA".into()),
        };
        let mode = match row.mode {
            AgreementMode::Correctness => "correctness",
            AgreementMode::Labels => "labels",
        };
        let _ = writeln!(
            out,
            "{},{},{},{mode},{},{:.6},{:.6},{k},{ks},{}",
            csv_field(&row.dataset_id),
            csv_field(&row.model_a),
            csv_field(&row.model_b),
            row.seeds,
            row.p_mean,
            row.r_mean,
            row.degenerate_seeds
        );
    }
    out
}

pub fn gaps_csv(artifacts: &RunArtifacts) -> String {
    let mut out = String::from("model_id,dataset_id,class_a,class_b,seeds,gap_points_mean,gap_points_std\n");
    for row in aggregate_gaps(artifacts) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.4},{:.4}",
            csv_field(&row.model_id),
            csv_field(&row.dataset_id),
            csv_field(&row.class_a),
            csv_field(&row.class_b),
            row.seeds,
            100.0 * row.mean,
            100.0 * row.std
        );
    }
    out
}

pub fn dataset_stats_csv(artifacts: &RunArtifacts) -> String {
    let rows = &artifacts.dataset_stats;
    let labels: BTreeSet<&String> = rows.iter().flat_map(|r| r.recipients_per_label.keys()).collect();
    let mut out = String::from("statistic");
    for r in rows {
        let _ = write!(out, ",{}", csv_field(&r.dataset_id));
    }
    out.push('\n');
    let mut line = |name: &str, f: &dyn Fn(&DatasetStatsRow) -> String| {
        out.push_str(name);
        for r in rows {
            out.push(',');
            out.push_str(&f(r));
        }
        out.push('\n');
    };
    line("utterances", &|r| r.utterances.to_string());
    line("recipients", &|r| r.recipients.to_string());
    for label in &labels {
        line(&format!("recipients_{label}"), &|r| {
            r.recipients_per_label.get(*label).copied().unwrap_or(0).to_string()
        });
    }
    line("balanced_utterances", &|r| r.balanced_examples.to_string());
    line("mean_chars_balanced", &|r| format!("{:.2}", r.mean_chars_balanced));
    for (i, split) in ["train", "val", "test"].iter().enumerate() {
        line(&format!("recipients_{split}"), &|r| r.recipient_splits[i].to_string());
    }
    for (i, split) in ["train", "val", "test"].iter().enumerate() {
        line(&format!("utterances_{split}"), &|r| r.example_splits[i].to_string());
    }
    out
}

pub fn summary_md(artifacts: &RunArtifacts) -> String {
    let mut out = String::from("# Recipient profiling run summary\n\n");
    let metrics = aggregate_metrics(artifacts);
    if !metrics.is_empty() {
        out.push_str("## Same-domain performance\n\nMean (sample std) over seeds.\n\n");
        out.push_str("| Model | Dataset | Balanced Accuracy | Accuracy | F1-score | Precision | Recall | Seeds |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for row in &metrics {
            let _ = write!(out, "| {} | {} |", row.model_id, row.dataset_id);
            for (m, s) in row.values {
                let _ = write!(out, " {} |", mean_std_cell(m, s));
            }
            let _ = writeln!(out, " {} |", row.seeds);
        }
        out.push('\n');
    }
    let transfer = aggregate_transfer(artifacts);
    if !transfer.is_empty() {
        out.push_str("## Transfer (balanced accuracy)\n\n| Model | Trained on | Evaluated on | Balanced Accuracy |\n|---|---|---|---|\n");
        for row in &transfer {
            let cell = row
                .balanced_accuracy
                .map_or_else(|| "unavailable".to_string(), |(m, s)| mean_std_cell(m, s));
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                row.model_id, row.train_dataset, row.eval_dataset, cell
            );
        }
        out.push('\n');
    }
    let gaps = aggregate_gaps(artifacts);
    if !gaps.is_empty() {
        out.push_str("## Per-class recall gap\n\nRecall difference in percentage points (recall of the first class minus recall of the second).\n\n");
        out.push_str("| Model | Dataset | Classes | Gap (points) |\n|---|---|---|---|\n");
        for row in &gaps {
            let _ = writeln!(
                out,
                "| {} | {} | {} - {} | {} ({:.2}) |",
                row.model_id,
                row.dataset_id,
                row.class_a,
                row.class_b,
                fmt_gap_points(row.mean),
                100.0 * row.std
            );
        }
        out.push('\n');
    }
    let agreement = aggregate_agreement(artifacts);
    if !agreement.is_empty() {
        out.push_str("## Model agreement (Cohen's kappa)\n\n| Dataset | Model A | Model B | Mode | P | R | Kappa |\n|---|---|---|---|---|---|---|\n");
        for row in &agreement {
            let k = row
                .kappa
                .map_or_else(|| "degenerate".to_string(), |(m, s)| mean_std_cell(m, s));
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:?} | {:.4} | {:.4} | {} |",
                row.dataset_id, row.model_a, row.model_b, row.mode, row.p_mean, row.r_mean, k
            );
        }
        out.push('\n');
    }
    if !artifacts.dataset_stats.is_empty() {
        out.push_str("## Datasets\n\n```text\n");
        out.push_str(&dataset_stats_csv(artifacts));
        out.push_str("```\n");
    }
    out
}

/// Rendered tables and summary as (relative path, contents).
pub fn table_files(artifacts: &RunArtifacts) -> Vec<(String, String)> {
    vec![
        ("tables/metrics.csv".into(), metrics_csv(artifacts)),
        ("tables/transfer.csv".into(), transfer_csv(artifacts)),
        ("tables/agreement.csv".into(), agreement_csv(artifacts)),
        ("tables/gaps.csv".into(), gaps_csv(artifacts)),
        ("tables/dataset_stats.csv".into(), dataset_stats_csv(artifacts)),
        ("summary.md".into(), summary_md(artifacts)),
    ]
}

/// Rendered charts as (relative path, contents).
pub fn chart_files(artifacts: &RunArtifacts) -> Vec<(String, String)> {
    let mut files = Vec::new();
    let metrics = aggregate_metrics(artifacts);
    if !metrics.is_empty() {
        files.push(("charts/performance.svg".into(), svg::performance_chart(&metrics)));
    }
    let gaps = aggregate_gaps(artifacts);
    if !gaps.is_empty() {
        files.push(("charts/gender_gap.svg".into(), svg::gap_chart(&gaps)));
    }
    let transfer = aggregate_transfer(artifacts);
    let models: BTreeSet<&str> = transfer.iter().map(|r| r.model_id.as_str()).collect();
    for model in models {
        let rows: Vec<&TransferRow> = transfer.iter().filter(|r| r.model_id == model).collect();
        files.push((
            format!("charts/transfer_{}.svg", slug(model)),
            svg::transfer_heatmap(model, &rows),
        ));
    }
    let agreement = aggregate_agreement(artifacts);
    let datasets: BTreeSet<&str> = agreement.iter().map(|r| r.dataset_id.as_str()).collect();
    for dataset in datasets {
        let rows: Vec<&AgreementRow> = agreement.iter().filter(|r| r.dataset_id == dataset).collect();
        files.push((
            format!("charts/kappa_{}.svg", slug(dataset)),
            svg::kappa_heatmap(dataset, &rows),
        ));
    }
    files
}

fn emit(files: Vec<(String, String)>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    files
        .into_iter()
        .map(|(rel, body)| write_file(&out_dir.join(rel), &body))
        .collect()
}

/// Write every table and the markdown summary.
pub fn emit_tables(artifacts: &RunArtifacts, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if artifacts.is_empty() {
        return Err(Error::EmptyInput("no artifacts to report".into()));
    }
    emit(table_files(artifacts), out_dir)
}

/// Write every chart.
pub fn emit_charts(artifacts: &RunArtifacts, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if artifacts.is_empty() {
        return Err(Error::EmptyInput("no artifacts to report".into()));
    }
    emit(chart_files(artifacts), out_dir)
}

mod svg {
    use super::*;

    const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

    fn esc(s: &str) -> String {
        s.replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;")
            .replace('"', "&quot;")
    }

    struct Doc {
        body: String,
        width: f64,
        height: f64,
    }

    impl Doc {
        fn new(width: f64, height: f64, title: &str) -> Self {
            let mut d = Self {
                body: String::new(),
                width,
                height,
            };
            d.text(width / 2.0, 24.0, title, "middle", 16.0, None);
            d
        }

        fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
            let _ = writeln!(
                self.body,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="#333" stroke-width="0.5"/>"##
            );
        }

        fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64) {
            let _ = writeln!(
                self.body,
                r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#000" stroke-width="1"/>"##
            );
        }

        fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: f64, value_key: Option<&str>) {
            let class = value_key
                .map(|k| format!(r#" class="value" data-key="{}""#, esc(k)))
                .unwrap_or_default();
            let _ = writeln!(
                self.body,
                r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="{size}"{class}>{}</text>"#,
                esc(s)
            );
        }

        fn finish(self) -> String {
            format!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n{}</svg>\n",
                self.body,
                w = self.width,
                h = self.height
            )
        }
    }

    /// Grouped bars: one group per dataset, one bar per model.
    pub fn performance_chart(rows: &[MetricsRow]) -> String {
        let datasets: Vec<&str> = rows
            .iter()
            .map(|r| r.dataset_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let models: Vec<&str> = rows
            .iter()
            .map(|r| r.model_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let bar_w = 40.0;
        let group_w = bar_w * models.len() as f64 + 30.0;
        let (left, top, plot_h) = (60.0, 50.0, 300.0);
        let width = left + group_w * datasets.len() as f64 + 160.0;
        let mut d = Doc::new(
            width,
            top + plot_h + 70.0,
            "Balanced accuracy (mean and std over seeds)",
        );
        let y_of = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));
        d.line(left, top, left, top + plot_h);
        d.line(left, top + plot_h, width - 150.0, top + plot_h);
        for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
            d.text(left - 6.0, y_of(tick) + 4.0, &format!("{tick:.2}"), "end", 11.0, None);
        }
        for (gi, ds) in datasets.iter().enumerate() {
            let gx = left + 15.0 + gi as f64 * group_w;
            d.text(
                gx + bar_w * models.len() as f64 / 2.0,
                top + plot_h + 20.0,
                ds,
                "middle",
                12.0,
                None,
            );
            for (mi, model) in models.iter().enumerate() {
                let Some(row) = rows.iter().find(|r| r.dataset_id == *ds && r.model_id == *model) else {
                    continue;
                };
                let (mean, std) = row.values[0];
                let x = gx + mi as f64 * bar_w;
                d.rect(
                    x + 4.0,
                    y_of(mean),
                    bar_w - 8.0,
                    top + plot_h - y_of(mean),
                    PALETTE[mi % PALETTE.len()],
                );
                let cx = x + bar_w / 2.0;
                d.line(cx, y_of(mean + std), cx, y_of(mean - std));
                d.line(cx - 6.0, y_of(mean + std), cx + 6.0, y_of(mean + std));
                d.line(cx - 6.0, y_of(mean - std), cx + 6.0, y_of(mean - std));
                d.text(
                    cx,
                    y_of(mean + std) - 6.0,
                    &fmt_value(mean),
                    "middle",
                    10.0,
                    Some(&format!("{model}|{ds}")),
                );
            }
        }
        for (mi, model) in models.iter().enumerate() {
            let y = top + 20.0 * mi as f64;
            d.rect(width - 140.0, y, 12.0, 12.0, PALETTE[mi % PALETTE.len()]);
            d.text(width - 122.0, y + 10.0, model, "start", 12.0, None);
        }
        d.finish()
    }

    /// Horizontal gap bars around a zero line, in percentage points.
    pub fn gap_chart(rows: &[GapRow]) -> String {
        let max_abs = rows
            .iter()
            .map(|r| (100.0 * (r.mean.abs() + r.std)).abs())
            .fold(5.0_f64, f64::max);
        let (left, top, row_h, half_w) = (220.0, 50.0, 28.0, 200.0);
        let zero_x = left + half_w;
        let mut d = Doc::new(
            left + 2.0 * half_w + 60.0,
            top + row_h * rows.len() as f64 + 40.0,
            "Per-class recall gap (points)",
        );
        d.line(zero_x, top - 5.0, zero_x, top + row_h * rows.len() as f64);
        for (i, row) in rows.iter().enumerate() {
            let y = top + i as f64 * row_h;
            let label = format!(
                "{} / {} ({}-{})",
                row.model_id, row.dataset_id, row.class_a, row.class_b
            );
            d.text(left - 10.0, y + 16.0, &label, "end", 11.0, None);
            let w = half_w * 100.0 * row.mean / max_abs;
            let (x, wv) = if w >= 0.0 { (zero_x, w) } else { (zero_x + w, -w) };
            d.rect(
                x,
                y + 4.0,
                wv,
                row_h - 10.0,
                if w >= 0.0 { PALETTE[0] } else { PALETTE[1] },
            );
            let lx = if w >= 0.0 { zero_x + w + 4.0 } else { zero_x + w - 4.0 };
            let anchor = if w >= 0.0 { "start" } else { "end" };
            d.text(
                lx,
                y + 16.0,
                &fmt_gap_points(row.mean),
                anchor,
                10.0,
                Some(&format!("{}|{}", row.model_id, row.dataset_id)),
            );
        }
        d.finish()
    }

    fn heat(v: f64) -> String {
        let t = v.clamp(0.0, 1.0);
        let r = (255.0 - t * (255.0 - 33.0)).round() as u8;
        let g = (255.0 - t * (255.0 - 102.0)).round() as u8;
        let b = (255.0 - t * (255.0 - 172.0)).round() as u8;
        format!("#{r:02x}{g:02x}{b:02x}")
    }

    fn heatmap(
        title: &str,
        rows: &[String],
        cols: &[String],
        cell: &dyn Fn(&str, &str) -> Option<(f64, String)>,
    ) -> String {
        let (left, top, size) = (140.0, 80.0, 70.0);
        let mut d = Doc::new(
            left + size * cols.len() as f64 + 30.0,
            top + size * rows.len() as f64 + 30.0,
            title,
        );
        for (j, c) in cols.iter().enumerate() {
            d.text(left + size * (j as f64 + 0.5), top - 10.0, c, "middle", 12.0, None);
        }
        for (i, r) in rows.iter().enumerate() {
            let y = top + size * i as f64;
            d.text(left - 8.0, y + size / 2.0 + 4.0, r, "end", 12.0, None);
            for (j, c) in cols.iter().enumerate() {
                let x = left + size * j as f64;
                match cell(r, c) {
                    Some((v, label)) => {
                        d.rect(x, y, size, size, &heat(v));
                        d.text(
                            x + size / 2.0,
                            y + size / 2.0 + 4.0,
                            &label,
                            "middle",
                            12.0,
                            Some(&format!("{r}|{c}")),
                        );
                    }
                    None => {
                        d.rect(x, y, size, size, "#eeeeee");
                        d.text(x + size / 2.0, y + size / 2.0 + 4.0, "n/a", "middle", 12.0, None);
                    }
                }
            }
        }
        d.finish()
    }

    /// Rows are training datasets, columns evaluation datasets.
    pub fn transfer_heatmap(model: &str, rows: &[&TransferRow]) -> String {
        let trains: Vec<String> = rows
            .iter()
            .map(|r| r.train_dataset.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let evals: Vec<String> = rows
            .iter()
            .map(|r| r.eval_dataset.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        heatmap(
            &format!("Transfer balanced accuracy: {model}"),
            &trains,
            &evals,
            &|r, c| {
                rows.iter()
                    .find(|x| x.train_dataset == r && x.eval_dataset == c)
                    .and_then(|x| x.balanced_accuracy)
                    .map(|(m, _)| (m, fmt_value(m)))
            },
        )
    }

    /// Symmetric model x model kappa matrix.
    pub fn kappa_heatmap(dataset: &str, rows: &[&AgreementRow]) -> String {
        let models: Vec<String> = rows
            .iter()
            .flat_map(|r| [r.model_a.clone(), r.model_b.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        heatmap(&format!("Kappa agreement: {dataset}"), &models, &models, &|a, b| {
            rows.iter()
                .find(|x| (x.model_a == a && x.model_b == b) || (x.model_a == b && x.model_b == a))
                .and_then(|x| x.kappa)
                .map(|(m, _)| (m, fmt_kappa(m)))
        })
    }
}
