//! Synthetic conversation corpus with a planted class signal.
//!
//! Each recipient receives utterances from one author in a dedicated
//! conversation. Utterances are a handful of words drawn uniformly from a
//! shared neutral vocabulary, so only the marker token carries label
//! information: it is inserted into an utterance with probability
//! `marker_rate` when the recipient has `marked_label`, and never otherwise.
//! Some utterances also carry bracketed annotation tokens that cleaning
//! removes.

use serde::{Deserialize, Serialize};

use crate::corpus::UtteranceRecord;
use crate::rng::SeededRng;

pub const NEUTRAL_WORDS: &[&str] = &[
    "about",
    "after",
    "again",
    "always",
    "around",
    "because",
    "before",
    "better",
    "call",
    "came",
    "could",
    "day",
    "done",
    "early",
    "every",
    "family",
    "game",
    "going",
    "good",
    "great",
    "home",
    "house",
    "just",
    "know",
    "later",
    "little",
    "long",
    "make",
    "maybe",
    "money",
    "morning",
    "never",
    "news",
    "next",
    "night",
    "people",
    "place",
    "really",
    "right",
    "school",
    "something",
    "still",
    "sure",
    "think",
    "time",
    "today",
    "tomorrow",
    "week",
    "well",
    "work",
    "yeah",
    "year",
];

const ANNOTATIONS: &[&str] = &["<laughter>", "{F uh}", "[noise]", "{D well}"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dataset_id: String,
    /// Recipients per label, in label order.
    pub recipients: Vec<(String, usize)>,
    pub utterances_per_recipient: usize,
    pub marker: String,
    pub marked_label: String,
    pub marker_rate: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub annotation_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// The bundled fixture: 52 + 48 recipients, 2 utterances each (200
    /// utterances) of 3 to 6 words, marker planted in 70% of the `F`
    /// class's utterances.
    fn default() -> Self {
        Self {
            dataset_id: "synth".into(),
            recipients: vec![("F".into(), 52), ("M".into(), 48)],
            utterances_per_recipient: 2,
            marker: "madam".into(),
            marked_label: "F".into(),
            marker_rate: 0.7,
            min_words: 3,
            max_words: 6,
            annotation_rate: 0.2,
            seed: 2024,
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Vec<UtteranceRecord> {
    let mut rng = SeededRng::new(cfg.seed);
    let mut records = Vec::new();
    let mut k = 0usize;
    for (label, count) in &cfg.recipients {
        for _ in 0..*count {
            let conversation_id = format!("conv{k:03}");
            let recipient_id = format!("rcp{k:03}");
            let author_id = format!("aut{k:03}");
            for turn in 0..cfg.utterances_per_recipient {
                let span = (cfg.max_words - cfg.min_words + 1) as u64;
                let n_words = cfg.min_words + rng.below(span) as usize;
                let mut words: Vec<&str> = (0..n_words)
                    .map(|_| NEUTRAL_WORDS[rng.below(NEUTRAL_WORDS.len() as u64) as usize])
                    .collect();
                if label == &cfg.marked_label && rng.bernoulli(cfg.marker_rate) {
                    let at = rng.below(words.len() as u64 + 1) as usize;
                    words.insert(at, &cfg.marker);
                }
                if rng.bernoulli(cfg.annotation_rate) {
                    let at = rng.below(words.len() as u64 + 1) as usize;
                    words.insert(at, ANNOTATIONS[rng.below(ANNOTATIONS.len() as u64) as usize]);
                }
                records.push(UtteranceRecord {
                    dataset_id: cfg.dataset_id.clone(),
                    conversation_id: conversation_id.clone(),
                    turn_index: turn as u64,
                    author_id: author_id.clone(),
                    recipient_id: recipient_id.clone(),
                    text: words.join(" "),
                    recipient_label: Some(label.clone()),
                    author_label: None,
                });
            }
            k += 1;
        }
    }
    records
}

/// Canonical line-delimited form of `records` (no `dataset_id` key).
pub fn to_canonical_jsonl(records: &[UtteranceRecord]) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        conversation_id: &'a str,
        turn_index: u64,
        author_id: &'a str,
        recipient_id: &'a str,
        text: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        recipient_label: Option<&'a str>,
        #[serde(skip_serializing_if = "Option::is_none")]
        author_label: Option<&'a str>,
    }
    let mut out = String::new();
    for r in records {
        let line = Line {
            conversation_id: &r.conversation_id,
            turn_index: r.turn_index,
            author_id: &r.author_id,
            recipient_id: &r.recipient_id,
            text: &r.text,
            recipient_label: r.recipient_label.as_deref(),
            author_label: r.author_label.as_deref(),
        };
        out.push_str(&serde_json::to_string(&line).expect("line serializes"));
        out.push('\n');
    }
    out
}
