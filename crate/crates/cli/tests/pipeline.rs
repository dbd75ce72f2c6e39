//! End-to-end runs of the command-line stages on the bundled corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use recipro_cli::manifest::UnitStatus;
use recipro_cli::{execute, main_with_args, Cli};
use recipro_core::model::EmbeddingTable;
use recipro_core::pipeline::ProfilingExample;
use recipro_core::rng::SeededRng;
use recipro_core::synth::SynthConfig;

use clap::Parser;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synth")
}

/// Copy the fixture corpus and config into a fresh directory.
fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for f in ["corpus.jsonl", "run.json"] {
        std::fs::copy(fixture_dir().join(f), dir.path().join(f)).unwrap();
    }
    let cfg = dir.path().join("run.json");
    (dir, cfg)
}

fn cmd(stage: &str, cfg: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec![
        "recipro".to_string(),
        stage.to_string(),
        "--config".into(),
        cfg.display().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(stage: &str, cfg: &Path, extra: &[&str]) -> i32 {
    main_with_args(cmd(stage, cfg, extra))
}

fn statuses(stage: &str, cfg: &Path) -> Vec<UnitStatus> {
    execute(&Cli::parse_from(cmd(stage, cfg, &[])).command).unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

/// Relative path -> bytes for every file under `root` except manifests.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                if !rel.starts_with("manifests") && rel != "run_manifest.json" {
                    out.insert(rel, std::fs::read(&p).unwrap());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn full_run_produces_every_artifact() {
    let (dir, cfg) = workspace();
    assert_eq!(run("run", &cfg, &[]), 0);
    let out = dir.path().join("out");
    for rel in [
        "ingest/synth/records.jsonl",
        "stats/synth/stats.csv",
        "prepared/synth/train.jsonl",
        "prepared/synth/val.jsonl",
        "prepared/synth/test.jsonl",
        "prepared/synth/split_manifest.json",
        "models/ngram/synth/seed1/model.rpmod",
        "models/ngram/synth/seed3/featurizer.rpfeat",
        "traces/ngram/synth/seed2.jsonl",
        "eval/ngram/synth/seed2.json",
        "transfer/ngram/seed1.json",
        "agreement/synth/seed1.json",
        "tables/metrics.csv",
        "tables/transfer.csv",
        "tables/agreement.csv",
        "tables/gaps.csv",
        "tables/dataset_stats.csv",
        "summary.md",
        "charts/performance.svg",
        "charts/gender_gap.svg",
        "charts/transfer_ngram.svg",
        "charts/kappa_synth.svg",
        "run_manifest.json",
    ] {
        assert!(out.join(rel).is_file(), "missing {rel}");
    }

    let metrics = std::fs::read_to_string(out.join("tables/metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..3], ["ngram", "synth", "3"]);
    let ba: f64 = row[3].parse().unwrap();
    assert!(ba >= 0.65, "balanced accuracy {ba}");

    let split = read_json(&out.join("prepared/synth/split_manifest.json"));
    assert_eq!(split["diagnostics"]["overlap"], serde_json::json!([]));

    let run_manifest = read_json(&out.join("run_manifest.json"));
    let stages: Vec<&str> = run_manifest["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["stage"].as_str().unwrap())
        .collect();
    for s in [
        "ingest", "stats", "prepare", "train", "eval", "transfer", "agree", "report",
    ] {
        assert!(stages.contains(&s), "{s} not in {stages:?}");
    }
}

#[test]
fn second_prepare_is_up_to_date() {
    let (_dir, cfg) = workspace();
    assert_eq!(statuses("ingest", &cfg), [UnitStatus::Ran]);
    assert_eq!(statuses("prepare", &cfg), [UnitStatus::Ran]);
    assert_eq!(statuses("prepare", &cfg), [UnitStatus::UpToDate]);
    assert_eq!(run("prepare", &cfg, &["--force"]), 0);
}

#[test]
fn stale_upstream_is_refused() {
    let (dir, cfg) = workspace();
    assert_eq!(run("prepare", &cfg, &[]), 1, "prepare before ingest");
    assert_eq!(run("ingest", &cfg, &[]), 0);
    assert_eq!(run("prepare", &cfg, &[]), 0);

    // hand-edited upstream output
    let records = dir.path().join("out/ingest/synth/records.jsonl");
    let original = std::fs::read(&records).unwrap();
    std::fs::write(&records, b"{}\n").unwrap();
    assert_eq!(run("prepare", &cfg, &["--force"]), 1);
    std::fs::write(&records, &original).unwrap();
    assert_eq!(run("prepare", &cfg, &[]), 0);

    // changed corpus without re-ingesting
    let corpus = dir.path().join("corpus.jsonl");
    let mut text = std::fs::read_to_string(&corpus).unwrap();
    text.push('\n');
    std::fs::write(&corpus, text).unwrap();
    assert_eq!(run("prepare", &cfg, &[]), 1);
    assert_eq!(run("train", &cfg, &[]), 1);
}

#[test]
fn data_and_config_errors_map_to_exit_codes() {
    let (dir, cfg) = workspace();
    assert_eq!(run("run", &cfg, &["--seed", "9"]), 1);
    assert_eq!(run("run", &cfg, &["--dataset", "nope"]), 1);
    std::fs::write(dir.path().join("bad.json"), b"{\"datasets\": 3}").unwrap();
    assert_eq!(run("ingest", &dir.path().join("bad.json"), &[]), 1);

    // one recipient per label cannot fill three splits
    let one_each = "{\"text\":\"hi\",\"recipient_id\":\"a\",\"recipient_label\":\"F\",\"conversation_id\":\"c\",\"turn_index\":0,\"author_id\":\"x\"}\n\
                    {\"text\":\"yo\",\"recipient_id\":\"b\",\"recipient_label\":\"M\",\"conversation_id\":\"c\",\"turn_index\":1,\"author_id\":\"y\"}\n";
    std::fs::write(dir.path().join("corpus.jsonl"), one_each).unwrap();
    assert_eq!(run("ingest", &cfg, &[]), 0);
    assert_eq!(run("prepare", &cfg, &[]), 2);
}

#[test]
fn rerun_reproduces_outputs_byte_for_byte() {
    let (dir, cfg) = workspace();
    assert_eq!(run("run", &cfg, &[]), 0);
    let out = dir.path().join("out");
    let first = snapshot(&out);
    std::fs::remove_dir_all(&out).unwrap();
    assert_eq!(run("run", &cfg, &[]), 0);
    let second = snapshot(&out);
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (rel, bytes) in &first {
        assert!(bytes == &second[rel], "{rel} differs");
    }
}

#[test]
fn seed_filter_limits_training() {
    let (dir, cfg) = workspace();
    for stage in ["ingest", "prepare"] {
        assert_eq!(run(stage, &cfg, &[]), 0);
    }
    assert_eq!(run("train", &cfg, &["--seed", "2"]), 0);
    let models = dir.path().join("out/models/ngram/synth");
    assert!(models.join("seed2").is_dir());
    assert!(!models.join("seed1").exists());
    assert_eq!(run("eval", &cfg, &["--seed", "1"]), 1, "seed 1 was never trained");
}

/// Embeddings carry the label on the first axis plus noise, so a probe
/// trained through the pipeline must beat chance comfortably.
#[test]
fn probe_model_runs_from_embedding_file() {
    let (dir, cfg) = workspace();
    for stage in ["ingest", "prepare"] {
        assert_eq!(run(stage, &cfg, &[]), 0);
    }
    let mut table = EmbeddingTable::new(4, "toy-encoder").unwrap();
    let mut rng = SeededRng::new(17);
    for split in ["train", "val", "test"] {
        let text = std::fs::read_to_string(dir.path().join(format!("out/prepared/synth/{split}.jsonl"))).unwrap();
        for line in text.lines() {
            let e: ProfilingExample = serde_json::from_str(line).unwrap();
            let sign = if e.label == SynthConfig::default().marked_label {
                1.0
            } else {
                -1.0
            };
            let v = (0..4)
                .map(|d| (rng.normal() + if d == 0 { 2.0 * sign } else { 0.0 }) as f32)
                .collect();
            table.insert(&e.example_id, v).unwrap();
        }
    }
    table.save(&dir.path().join("synth.rpemb")).unwrap();

    let mut config = read_json(&cfg);
    config["models"].as_array_mut().unwrap().push(serde_json::json!({
        "id": "probe",
        "kind": "probe",
        "encoder": "toy-encoder",
        "embeddings": { "synth": "synth.rpemb" }
    }));
    std::fs::write(&cfg, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
    assert_eq!(run("run", &cfg, &[]), 0);

    let out = dir.path().join("out");
    let metrics = std::fs::read_to_string(out.join("tables/metrics.csv")).unwrap();
    let probe_row = metrics.lines().find(|l| l.starts_with("probe,")).expect("probe row");
    let ba: f64 = probe_row.split(',').nth(3).unwrap().parse().unwrap();
    assert!(ba > 0.9, "probe balanced accuracy {ba}");

    // both models scored on the same test split, so kappa pairs exist
    let agreement = std::fs::read_to_string(out.join("tables/agreement.csv")).unwrap();
    assert!(
        agreement
            .lines()
            .any(|l| l.contains("ngram,probe") || l.contains("probe,ngram")),
        "{agreement}"
    );
}
