//! From cleaned utterances to balanced, recipient-grouped example sets.
//!
//! The driver order is fixed: chunk, balance, then split. Balancing before
//! splitting means per-split label mixtures are not enforced.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::UtteranceRecord;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// A concatenated chunk of utterances sent by one author to one recipient
/// in one conversation. This is the classifier's input unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfilingExample {
    pub example_id: String,
    pub dataset_id: String,
    pub recipient_id: String,
    pub label: String,
    pub text: String,
    pub source_turns: Vec<u64>,
    pub char_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub char_limit: usize,
    pub separator: String,
    pub keep_short_tail: bool,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            char_limit: 1000,
            separator: " ".into(),
            keep_short_tail: true,
        }
    }
}

/// Concatenate utterances per (dataset, conversation, author, recipient)
/// group.
///
/// Within a group, utterances are taken in `turn_index` order and appended
/// to the open chunk; the chunk is emitted as soon as its length reaches
/// `char_limit`, so chunks may overshoot the limit. A final under-limit
/// chunk is kept iff `keep_short_tail`.
///
/// Groups are visited in order of first appearance. Example ids are
/// `{dataset}:{conversation}:{n}` with `n` counting chunks within the
/// conversation. Records without a recipient label are skipped.
pub fn chunk_utterances(records: &[UtteranceRecord], cfg: &ChunkingConfig) -> Result<Vec<ProfilingExample>> {
    if cfg.char_limit == 0 {
        return Err(Error::Config("char_limit must be >= 1".into()));
    }
    type Key<'a> = (&'a str, &'a str, &'a str, &'a str);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Vec<&UtteranceRecord>> = HashMap::new();
    for r in records.iter().filter(|r| r.recipient_label.is_some()) {
        let key = (
            r.dataset_id.as_str(),
            r.conversation_id.as_str(),
            r.author_id.as_str(),
            r.recipient_id.as_str(),
        );
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }

    let sep_len = cfg.separator.chars().count();
    let mut per_conversation: HashMap<(&str, &str), usize> = HashMap::new();
    let mut out = Vec::new();
    for key in order {
        let mut members = groups.remove(&key).unwrap_or_default();
        members.sort_by_key(|r| r.turn_index);
        let label = members[0].recipient_label.clone().unwrap_or_default();

        let mut text = String::new();
        let mut turns = Vec::new();
        let mut len = 0usize;
        let mut emit = |text: &mut String, turns: &mut Vec<u64>, len: &mut usize| {
            let seq = per_conversation.entry((key.0, key.1)).or_insert(0);
            out.push(ProfilingExample {
                example_id: format!("{}:{}:{}", key.0, key.1, seq),
                dataset_id: key.0.to_string(),
                recipient_id: key.3.to_string(),
                label: label.clone(),
                text: std::mem::take(text),
                source_turns: std::mem::take(turns),
                char_length: *len,
            });
            *seq += 1;
            *len = 0;
        };

        for r in members {
            if !turns.is_empty() {
                text.push_str(&cfg.separator);
                len += sep_len;
            }
            text.push_str(&r.text);
            len += r.text.chars().count();
            turns.push(r.turn_index);
            if len >= cfg.char_limit {
                emit(&mut text, &mut turns, &mut len);
            }
        }
        if !turns.is_empty() && cfg.keep_short_tail {
            emit(&mut text, &mut turns, &mut len);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceLevel {
    #[default]
    Utterance,
    Recipient,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub level: BalanceLevel,
    pub seed: u64,
}

/// Subsample every class down to the smallest class.
///
/// At `Utterance` level the unit counted is the example; at `Recipient`
/// level whole recipients of the larger classes are dropped (with all their
/// examples) until recipient counts match. With more than two labels every
/// class is reduced to the minimum, a direct generalisation of the binary
/// case.
///
/// Labels are processed in sorted order. Within a label the unit list
/// (examples in input order, or recipients sorted by id) is shuffled with
/// [`SeededRng`] and truncated, so survivors are a pure function of the
/// input and the seed. Survivors keep their input order.
///
/// Every label in `alphabet` must have at least one example, and at least
/// two labels must be present.
pub fn balance_classes(
    examples: &[ProfilingExample],
    alphabet: &BTreeSet<String>,
    cfg: &BalanceConfig,
) -> Result<Vec<ProfilingExample>> {
    // label -> unit -> example indices
    let mut units: BTreeMap<&str, BTreeMap<String, Vec<usize>>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        let unit = match cfg.level {
            BalanceLevel::Utterance => format!("{i:020}"),
            BalanceLevel::Recipient => ex.recipient_id.clone(),
        };
        units
            .entry(ex.label.as_str())
            .or_default()
            .entry(unit)
            .or_default()
            .push(i);
    }
    for label in alphabet {
        if !units.contains_key(label.as_str()) {
            return Err(Error::DegenerateClass(format!("label {label:?} has no examples")));
        }
    }
    if units.len() < 2 {
        return Err(Error::DegenerateClass(format!(
            "need at least two labels, found {}",
            units.len()
        )));
    }

    let target = units.values().map(BTreeMap::len).min().unwrap_or(0);
    let mut rng = SeededRng::new(cfg.seed);
    let mut keep = vec![false; examples.len()];
    for per_unit in units.values() {
        let mut ids: Vec<&Vec<usize>> = per_unit.values().collect();
        if ids.len() > target {
            rng.shuffle(&mut ids);
            ids.truncate(target);
        }
        for idx in ids.into_iter().flatten() {
            keep[*idx] = true;
        }
    }
    Ok(examples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(ex, _)| ex.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.80,
            val_fraction: 0.04,
            test_fraction: 0.16,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn fractions(&self) -> [f64; 3] {
        [self.train_fraction, self.val_fraction, self.test_fraction]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("split fractions must be finite and >= 0".into()));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {}",
                f.iter().sum::<f64>()
            )));
        }
        Ok(())
    }
}

/// Number of groups per split for `n` groups.
///
/// Largest-remainder apportionment of the quotas `n * fraction`: floors
/// first, then leftover seats go to the largest fractional parts (ties to
/// the earlier split). When `n >= 3`, an empty split then takes one group
/// from the split holding the largest surplus over its quota (ties to the
/// larger allocation, then the earlier split) among those with more than
/// one group.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    // Quotas and remainders are compared with a small tolerance so that
    // products such as 0.29 * 100 behave as the exact values they denote.
    const EPS: f64 = 1e-9;
    let quotas = fractions.map(|f| {
        let q = f * n as f64;
        if (q - q.round()).abs() <= EPS {
            q.round()
        } else {
            q
        }
    });
    let cmp = |a: f64, b: f64| {
        if (a - b).abs() <= EPS {
            Ordering::Equal
        } else {
            a.total_cmp(&b)
        }
    };
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        cmp(rb, ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    if n >= 3 {
        for empty in 0..3 {
            if sizes[empty] > 0 {
                continue;
            }
            let donor = (0..3)
                .filter(|&i| sizes[i] > 1)
                .max_by(|&a, &b| {
                    cmp(sizes[a] as f64 - quotas[a], sizes[b] as f64 - quotas[b])
                        .then(sizes[a].cmp(&sizes[b]))
                        .then(b.cmp(&a))
                })
                .expect("n >= 3 leaves a donor");
            sizes[donor] -= 1;
            sizes[empty] += 1;
        }
    }
    sizes
}

/// Recipient to split mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub recipients: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn members(&self, split: Split) -> Vec<&str> {
        self.recipients
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(r, _)| r.as_str())
            .collect()
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for s in self.recipients.values() {
            sizes[*s as usize] += 1;
        }
        sizes
    }
}

/// Examples per split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSets {
    pub train: Vec<ProfilingExample>,
    pub val: Vec<ProfilingExample>,
    pub test: Vec<ProfilingExample>,
}

impl SplitSets {
    pub fn get(&self, split: Split) -> &[ProfilingExample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<ProfilingExample> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

/// Assign whole recipients to train/val/test.
///
/// The sorted distinct recipient list is shuffled with the seed and cut
/// according to [`split_sizes`]; the result does not depend on example
/// order.
pub fn split_by_recipient(examples: &[ProfilingExample], cfg: &SplitConfig) -> Result<(SplitAssignment, SplitSets)> {
    cfg.validate()?;
    let mut recipients: Vec<&str> = examples
        .iter()
        .map(|e| e.recipient_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if recipients.len() < 3 {
        return Err(Error::TooFewGroups(recipients.len()));
    }
    SeededRng::new(cfg.seed).shuffle(&mut recipients);
    let [n_train, n_val, _] = split_sizes(recipients.len(), cfg.fractions());

    let mut assignment = SplitAssignment::default();
    for (i, r) in recipients.into_iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        assignment.recipients.insert(r.to_string(), split);
    }

    let mut sets = SplitSets::default();
    for ex in examples {
        let split = assignment.recipients[&ex.recipient_id];
        sets.get_mut(split).push(ex.clone());
    }
    Ok((assignment, sets))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDiagnostics {
    /// Recipients whose examples occur in more than one split.
    pub overlap: Vec<String>,
    /// Example ids sitting in a split other than their recipient's assigned
    /// one (or whose recipient is unassigned).
    pub misplaced: Vec<String>,
    /// Distinct recipients observed per split (train, val, test).
    pub recipient_sizes: [usize; 3],
    pub example_sizes: [usize; 3],
    /// Example count per label, per split.
    pub label_mix: [BTreeMap<String, usize>; 3],
}

impl SplitDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.overlap.is_empty() && self.misplaced.is_empty()
    }
}

/// Leakage check over materialised split sets.
pub fn verify_split(assignment: &SplitAssignment, sets: &SplitSets) -> SplitDiagnostics {
    let mut seen: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    let mut diag = SplitDiagnostics::default();
    for split in Split::ALL {
        let idx = split as usize;
        let mut recipients = BTreeSet::new();
        for ex in sets.get(split) {
            seen.entry(ex.recipient_id.as_str()).or_default().insert(split);
            recipients.insert(ex.recipient_id.as_str());
            *diag.label_mix[idx].entry(ex.label.clone()).or_insert(0) += 1;
            if assignment.recipients.get(&ex.recipient_id) != Some(&split) {
                diag.misplaced.push(ex.example_id.clone());
            }
        }
        diag.recipient_sizes[idx] = recipients.len();
        diag.example_sizes[idx] = sets.get(split).len();
    }
    diag.overlap = seen
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(r, _)| r.to_string())
        .collect();
    diag
}
