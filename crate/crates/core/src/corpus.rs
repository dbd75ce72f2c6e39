//! Conversation corpora in canonical form.
//!
//! Every corpus is distributed as line-delimited JSON, one directed
//! utterance per line:
//!
//! ```text
//! {"conversation_id":"c1","turn_index":0,"author_id":"a1","recipient_id":"r1","text":"Hi","recipient_label":"F"}
//! ```
//!
//! Required keys are `conversation_id`, `turn_index`, `author_id`,
//! `recipient_id` and `text`. `recipient_label` and `author_label` are
//! optional and omitted when unknown. `dataset_id` may appear on a line but
//! the id passed to [`ingest`] always wins.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One directed message from an author to a recipient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub dataset_id: String,
    pub conversation_id: String,
    pub turn_index: u64,
    pub author_id: String,
    pub recipient_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_label: Option<String>,
}

/// A line that did not become a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

/// Result of reading a canonical corpus file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Ingested {
    pub records: Vec<UtteranceRecord>,
    pub total_lines: usize,
    pub rejections: Vec<Rejection>,
}

impl Ingested {
    /// Rejections tallied by reason.
    pub fn reject_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.rejections {
            *counts.entry(r.reason.clone()).or_insert(0) += 1;
        }
        counts
    }
}

/// Streaming reader over canonical lines. Yields one outcome per input line,
/// in input order.
pub struct Ingester<R> {
    lines: std::io::Lines<R>,
    dataset_id: String,
    alphabet: BTreeSet<String>,
    seen_turns: HashSet<(String, u64)>,
    line_no: usize,
}

impl<R: BufRead> Ingester<R> {
    pub fn new(reader: R, dataset_id: &str, alphabet: &BTreeSet<String>) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(Error::Config("label alphabet is empty".into()));
        }
        Ok(Self {
            lines: reader.lines(),
            dataset_id: dataset_id.to_string(),
            alphabet: alphabet.clone(),
            seen_turns: HashSet::new(),
            line_no: 0,
        })
    }
}

impl<R: BufRead> Iterator for Ingester<R> {
    type Item = std::io::Result<std::result::Result<UtteranceRecord, Rejection>>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.lines.next()? {
            Ok(line) => line,
            Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                self.line_no += 1;
                return Some(Ok(Err(Rejection {
                    line: self.line_no,
                    reason: "invalid_utf8".into(),
                })));
            }
            Err(e) => return Some(Err(e)),
        };
        self.line_no += 1;
        let outcome = parse_line(&line, &self.dataset_id, &self.alphabet).and_then(|rec| {
            let key = (rec.conversation_id.clone(), rec.turn_index);
            if self.seen_turns.insert(key) {
                Ok(rec)
            } else {
                Err("duplicate_turn_index".to_string())
            }
        });
        Some(Ok(outcome.map_err(|reason| Rejection {
            line: self.line_no,
            reason,
        })))
    }
}

/// Read a canonical corpus file. Malformed lines are collected as
/// rejections; only an unreadable file is fatal.
pub fn ingest(path: &Path, dataset_id: &str, alphabet: &BTreeSet<String>) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(BufReader::new(file), dataset_id, alphabet).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn ingest_reader<R: BufRead>(reader: R, dataset_id: &str, alphabet: &BTreeSet<String>) -> Result<Ingested> {
    let mut out = Ingested::default();
    for item in Ingester::new(reader, dataset_id, alphabet)? {
        let item = item.map_err(|e| Error::io("<reader>", e))?;
        out.total_lines += 1;
        match item {
            Ok(rec) => out.records.push(rec),
            Err(rej) => out.rejections.push(rej),
        }
    }
    Ok(out)
}

fn parse_line(
    line: &str,
    dataset_id: &str,
    alphabet: &BTreeSet<String>,
) -> std::result::Result<UtteranceRecord, String> {
    if line.trim().is_empty() {
        return Err("blank_line".into());
    }
    let value: Value = serde_json::from_str(line).map_err(|_| "malformed_json".to_string())?;
    let obj = value.as_object().ok_or_else(|| "malformed_json".to_string())?;

    let required_str = |key: &str| -> std::result::Result<String, String> {
        match obj.get(key) {
            None | Some(Value::Null) => Err(format!("missing_field:{key}")),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("invalid_field:{key}")),
        }
    };
    let optional_str = |key: &str| -> std::result::Result<Option<String>, String> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(format!("invalid_field:{key}")),
        }
    };

    let conversation_id = required_str("conversation_id")?;
    let turn_index = match obj.get("turn_index") {
        None | Some(Value::Null) => return Err("missing_field:turn_index".into()),
        Some(v) => v.as_u64().ok_or_else(|| "invalid_field:turn_index".to_string())?,
    };
    let author_id = required_str("author_id")?;
    let recipient_id = required_str("recipient_id")?;
    let text = required_str("text")?;
    let recipient_label = optional_str("recipient_label")?;
    let author_label = optional_str("author_label")?;

    if text.is_empty() {
        return Err("empty_text".into());
    }
    if let Some(label) = &recipient_label {
        if !alphabet.contains(label) {
            return Err("label_out_of_alphabet".into());
        }
    }

    Ok(UtteranceRecord {
        dataset_id: dataset_id.to_string(),
        conversation_id,
        turn_index,
        author_id,
        recipient_id,
        text,
        recipient_label,
        author_label,
    })
}

/// Cleaning options. Patterns use the `regex` crate syntax; every match is
/// deleted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub strip_patterns: Vec<String>,
    pub collapse_whitespace: bool,
    pub lowercase: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            strip_patterns: vec![
                r"\{[^{}]*\}".to_string(),
                r"<[^<>]*>".to_string(),
                r"\[[^\[\]]*\]".to_string(),
            ],
            collapse_whitespace: true,
            lowercase: false,
        }
    }
}

/// A validated [`CleaningConfig`] with compiled patterns.
#[derive(Debug, Clone)]
pub struct Cleaner {
    patterns: Vec<Regex>,
    collapse_whitespace: bool,
    lowercase: bool,
}

impl Cleaner {
    pub fn new(cfg: &CleaningConfig) -> Result<Self> {
        let patterns = cfg
            .strip_patterns
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|e| Error::Pattern {
                    pattern: p.clone(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            patterns,
            collapse_whitespace: cfg.collapse_whitespace,
            lowercase: cfg.lowercase,
        })
    }

    /// Delete every pattern match, collapse whitespace runs and trim.
    ///
    /// The pass is repeated until the text stops changing, so nested tokens
    /// like `{C and {F uh} }` disappear completely and the function is
    /// idempotent.
    pub fn clean(&self, text: &str) -> String {
        let mut current = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        loop {
            let mut next = current.clone();
            for re in &self.patterns {
                if let std::borrow::Cow::Owned(s) = re.replace_all(&next, "") {
                    next = s;
                }
            }
            if self.collapse_whitespace {
                next = next.split_whitespace().collect::<Vec<_>>().join(" ");
            } else {
                next = next.trim().to_string();
            }
            if next == current {
                return next;
            }
            current = next;
        }
    }
}

pub fn clean_text(text: &str, cfg: &CleaningConfig) -> Result<String> {
    Ok(Cleaner::new(cfg)?.clean(text))
}

/// Clean every record's text, dropping those left empty. Returns the
/// survivors and the number dropped (reason `empty_after_cleaning`).
pub fn clean_records(records: Vec<UtteranceRecord>, cleaner: &Cleaner) -> (Vec<UtteranceRecord>, usize) {
    let mut dropped = 0;
    let kept = records
        .into_iter()
        .filter_map(|mut r| {
            r.text = cleaner.clean(&r.text);
            if r.text.is_empty() {
                dropped += 1;
                None
            } else {
                Some(r)
            }
        })
        .collect();
    (kept, dropped)
}

/// Keep exactly the records whose recipient label is known.
pub fn filter_labeled(records: impl IntoIterator<Item = UtteranceRecord>) -> Vec<UtteranceRecord> {
    records.into_iter().filter(|r| r.recipient_label.is_some()).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub utterance_count: usize,
    pub recipient_count: usize,
    pub recipients_per_label: BTreeMap<String, usize>,
    pub utterances_per_label: BTreeMap<String, usize>,
    pub mean_chars: f64,
}

pub fn corpus_stats(records: &[UtteranceRecord]) -> CorpusStats {
    let mut recipients = BTreeSet::new();
    let mut labeled_recipients: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    let mut utterances_per_label = BTreeMap::new();
    let mut total_chars = 0usize;
    for r in records {
        recipients.insert(r.recipient_id.as_str());
        total_chars += r.text.chars().count();
        if let Some(label) = &r.recipient_label {
            labeled_recipients
                .entry(label.clone())
                .or_default()
                .insert(r.recipient_id.as_str());
            *utterances_per_label.entry(label.clone()).or_insert(0) += 1;
        }
    }
    CorpusStats {
        utterance_count: records.len(),
        recipient_count: recipients.len(),
        recipients_per_label: labeled_recipients.into_iter().map(|(k, v)| (k, v.len())).collect(),
        utterances_per_label,
        mean_chars: if records.is_empty() {
            0.0
        } else {
            total_chars as f64 / records.len() as f64
        },
    }
}

impl CorpusStats {
    /// Flat `key,value` rows, header included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,value\n");
        for (k, v) in self.rows() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    fn rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("utterance_count".to_string(), self.utterance_count.to_string()),
            ("recipient_count".to_string(), self.recipient_count.to_string()),
        ];
        for (label, n) in &self.recipients_per_label {
            rows.push((format!("recipients_label_{label}"), n.to_string()));
        }
        for (label, n) in &self.utterances_per_label {
            rows.push((format!("utterances_label_{label}"), n.to_string()));
        }
        rows.push(("mean_chars".to_string(), format!("{:.2}", self.mean_chars)));
        rows
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            writeln!(f, "{k:<width$}  {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alphabet() -> BTreeSet<String> {
        ["F", "M"].iter().map(|s| s.to_string()).collect()
    }

    fn rec(text: &str, label: Option<&str>) -> UtteranceRecord {
        UtteranceRecord {
            dataset_id: "d".into(),
            conversation_id: "c".into(),
            turn_index: 0,
            author_id: "a".into(),
            recipient_id: format!("r-{text}"),
            text: text.into(),
            recipient_label: label.map(Into::into),
            author_label: None,
        }
    }

    #[test]
    fn ingest_maps_fields() {
        let line = r#"{"conversation_id":"c1","turn_index":0,"author_id":"a1","recipient_id":"r1","text":"Hi","recipient_label":"F"}"#;
        let out = ingest_reader(line.as_bytes(), "swda", &alphabet()).unwrap();
        assert_eq!(out.total_lines, 1);
        assert!(out.rejections.is_empty());
        let r = &out.records[0];
        assert_eq!(r.dataset_id, "swda");
        assert_eq!(r.conversation_id, "c1");
        assert_eq!(r.turn_index, 0);
        assert_eq!(r.author_id, "a1");
        assert_eq!(r.recipient_id, "r1");
        assert_eq!(r.text, "Hi");
        assert_eq!(r.recipient_label.as_deref(), Some("F"));
        assert_eq!(r.author_label, None);
    }

    #[test]
    fn ingest_rejects_with_reasons() {
        let input = concat!(
            r#"{"conversation_id":"c1","turn_index":0,"author_id":"a1","text":"Hi","recipient_label":"F"}"#,
            "\n",
            r#"{"conversation_id":"c1","turn_index":1,"author_id":"a1","recipient_id":"r1","text":"Hi","recipient_label":"X"}"#,
            "\n",
            "not json\n",
            "\n",
            r#"{"conversation_id":"c1","turn_index":-1,"author_id":"a1","recipient_id":"r1","text":"Hi"}"#,
            "\n",
            r#"{"conversation_id":"c1","turn_index":2,"author_id":"a1","recipient_id":"r1","text":"ok"}"#,
            "\n",
            r#"{"conversation_id":"c1","turn_index":2,"author_id":"a1","recipient_id":"r1","text":"dup"}"#,
            "\n",
            r#"{"conversation_id":"c1","turn_index":3,"author_id":"a1","recipient_id":"r1","text":""}"#,
            "\n",
        );
        let out = ingest_reader(input.as_bytes(), "d", &alphabet()).unwrap();
        assert_eq!(out.total_lines, 8);
        assert_eq!(out.records.len(), 1);
        let reasons: Vec<_> = out.rejections.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(
            reasons,
            vec![
                "missing_field:recipient_id",
                "label_out_of_alphabet",
                "malformed_json",
                "blank_line",
                "invalid_field:turn_index",
                "duplicate_turn_index",
                "empty_text",
            ]
        );
        assert_eq!(out.rejections[0].line, 1);
        assert_eq!(out.records.len() + out.rejections.len(), out.total_lines);
    }

    #[test]
    fn ingest_requires_alphabet() {
        assert!(ingest_reader("".as_bytes(), "d", &BTreeSet::new()).is_err());
    }

    #[test]
    fn ingest_missing_file_is_fatal() {
        let err = ingest(Path::new("/nonexistent/corpus.jsonl"), "d", &alphabet()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn record_serialization_omits_missing_labels() {
        let json = serde_json::to_string(&rec("x", None)).unwrap();
        assert!(!json.contains("recipient_label"));
        assert!(!json.contains("null"));
    }

    #[test]
    fn clean_strips_annotations() {
        let cfg = CleaningConfig::default();
        assert_eq!(clean_text("{D well } I <laughter> agree", &cfg).unwrap(), "I agree");
        assert_eq!(clean_text("hello", &cfg).unwrap(), "hello");
        assert_eq!(clean_text("{C and {F uh} } so", &cfg).unwrap(), "so");
        assert_eq!(clean_text("  a \t b\n", &cfg).unwrap(), "a b");
        assert_eq!(clean_text("<noise>", &cfg).unwrap(), "");
    }

    #[test]
    fn clean_honours_flags() {
        let cfg = CleaningConfig {
            strip_patterns: vec![],
            collapse_whitespace: false,
            lowercase: true,
        };
        assert_eq!(clean_text("  Hello  World ", &cfg).unwrap(), "hello  world");
    }

    #[test]
    fn bad_pattern_is_reported() {
        let cfg = CleaningConfig {
            strip_patterns: vec!["(".into()],
            ..Default::default()
        };
        assert!(matches!(clean_text("x", &cfg), Err(Error::Pattern { .. })));
    }

    #[test]
    fn clean_records_counts_drops() {
        let cleaner = Cleaner::new(&CleaningConfig::default()).unwrap();
        let (kept, dropped) = clean_records(vec![rec("<laughter>", Some("F")), rec("yes", Some("M"))], &cleaner);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn filter_keeps_labeled() {
        let out = filter_labeled(vec![rec("a", Some("F")), rec("b", None), rec("c", Some("M"))]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].text, "a");
        assert_eq!(out[1].text, "c");
    }

    #[test]
    fn stats_small() {
        let s = corpus_stats(&[rec("ab", Some("F")), rec("abcd", Some("M"))]);
        assert_eq!(s.utterance_count, 2);
        assert_eq!(s.recipient_count, 2);
        assert_eq!(s.mean_chars, 3.0);
        assert_eq!(s.recipients_per_label["F"], 1);
        assert_eq!(s.recipients_per_label["M"], 1);
        assert_eq!(s.utterances_per_label["F"], 1);
        assert!(s.to_csv().contains("mean_chars,3.00"));
    }

    #[test]
    fn stats_empty() {
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
    }
}
