//! Independent reference implementations used by the test suites.
//!
//! These are written for obviousness, not speed: straight counting loops,
//! exact integer arithmetic where the production code uses floats.

#![allow(dead_code)]

use std::collections::BTreeSet;

use recipro_core::eval::PredictionTrace;
use recipro_core::synth::{SynthConfig, NEUTRAL_WORDS};

#[derive(Debug, Clone, Copy)]
pub struct Metrics {
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Brute-force metrics by scanning the trace once per label.
pub fn metrics(trace: &PredictionTrace) -> Metrics {
    let labels: BTreeSet<&str> = trace
        .entries
        .iter()
        .flat_map(|e| [e.truth.as_str(), e.predicted.as_str()])
        .collect();
    let mut recalls_present = Vec::new();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in &labels {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for e in &trace.entries {
            let t = e.truth == *c;
            let p = e.predicted == *c;
            match (t, p) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if tp + fn_ > 0 {
            recalls_present.push(recall);
        }
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let k = labels.len() as f64;
    let correct = trace.entries.iter().filter(|e| e.truth == e.predicted).count();
    Metrics {
        balanced_accuracy: recalls_present.iter().sum::<f64>() / recalls_present.len() as f64,
        accuracy: correct as f64 / trace.entries.len() as f64,
        precision: p_sum / k,
        recall: r_sum / k,
        f1: f_sum / k,
    }
}

/// Kappa straight from its definition, `(p - r) / (1 - r)`, over two
/// aligned sequences of categorical outcomes. `None` when `r == 1`.
pub fn kappa<T: Ord + Clone>(a: &[T], b: &[T]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let p = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let cats: BTreeSet<T> = a.iter().chain(b).cloned().collect();
    let r: f64 = cats
        .iter()
        .map(|c| {
            let pa = a.iter().filter(|x| *x == c).count() as f64 / n;
            let pb = b.iter().filter(|x| *x == c).count() as f64 / n;
            pa * pb
        })
        .sum();
    if r == 1.0 {
        None
    } else {
        Some((p - r) / (1.0 - r))
    }
}

/// Largest-remainder split sizes in exact integer arithmetic. Fractions
/// are given in parts per `denom` and must sum to `denom`.
///
/// Quotas are `n * parts / denom`; floors first, leftovers to the largest
/// remainders (earlier split on ties). With `n >= 3`, each empty split takes
/// one group from the split with the largest `alloc - quota` (ties: larger
/// allocation, then earlier split) among splits holding more than one.
pub fn split_sizes(n: usize, parts: [u64; 3], denom: u64) -> [usize; 3] {
    assert_eq!(parts.iter().sum::<u64>(), denom);
    let n64 = n as u64;
    let mut sizes = parts.map(|p| (n64 * p / denom) as usize);
    let rem = parts.map(|p| n64 * p % denom);
    let mut leftover = n - sizes.iter().sum::<usize>();
    let mut taken = [false; 3];
    while leftover > 0 {
        let mut best: Option<usize> = None;
        for i in 0..3 {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| rem[i] > rem[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        sizes[b] += 1;
        leftover -= 1;
    }
    if n >= 3 {
        for empty in 0..3 {
            if sizes[empty] > 0 {
                continue;
            }
            // surplus scaled by denom: alloc*denom - n*parts
            let surplus = |i: usize| sizes[i] as i128 * denom as i128 - (n64 * parts[i]) as i128;
            let mut best: Option<usize> = None;
            for i in 0..3 {
                if sizes[i] <= 1 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => (surplus(i), sizes[i]) > (surplus(b), sizes[b]),
                };
                if better {
                    best = Some(i);
                }
            }
            let d = best.unwrap();
            sizes[d] -= 1;
            sizes[empty] += 1;
        }
    }
    sizes
}

/// Central finite-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Bayes-optimal balanced accuracy for single utterances of the synthetic
/// generator, by enumerating its label-dependent branches.
///
/// Per utterance the generator draws a word count, word identities from
/// the shared vocabulary, an optional marker insertion (only for the marked
/// label) and an optional annotation. Word identities, word count and the
/// annotation have the same distribution for every label, so the observable
/// that separates labels is the marker's presence; every branch of the
/// generator is enumerated with its probability and grouped by that
/// observable. With equal class weights the optimal balanced accuracy is
/// `(1/K) * sum over observations of max over labels of P(obs | label)`.
pub fn synth_bayes_balanced_accuracy(cfg: &SynthConfig) -> f64 {
    assert!(!NEUTRAL_WORDS.contains(&cfg.marker.as_str()));
    let labels: Vec<&str> = cfg.recipients.iter().map(|(l, _)| l.as_str()).collect();
    let span = cfg.max_words - cfg.min_words + 1;
    // P(obs | label) where obs = (marker present, word count, annotation)
    let mut table: std::collections::BTreeMap<(bool, usize, bool), Vec<f64>> = Default::default();
    for (li, label) in labels.iter().enumerate() {
        let marked = *label == cfg.marked_label;
        for words in cfg.min_words..=cfg.max_words {
            for marker in [false, true] {
                let p_marker = match (marked, marker) {
                    (true, true) => cfg.marker_rate,
                    (true, false) => 1.0 - cfg.marker_rate,
                    (false, true) => 0.0,
                    (false, false) => 1.0,
                };
                for annotation in [false, true] {
                    let p_ann = if annotation {
                        cfg.annotation_rate
                    } else {
                        1.0 - cfg.annotation_rate
                    };
                    let p = p_marker * p_ann / span as f64;
                    table
                        .entry((marker, words, annotation))
                        .or_insert_with(|| vec![0.0; labels.len()])[li] += p;
                }
            }
        }
    }
    let total: f64 = table.values().map(|ps| ps.iter().cloned().fold(0.0, f64::max)).sum();
    total / labels.len() as f64
}
