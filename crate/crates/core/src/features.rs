//! Hashed n-gram features with optional TF-IDF weighting.
//!
//! Text is optionally lowercased, then two families of n-grams are
//! extracted:
//!
//! - word n-grams over whitespace-separated tokens, hashed as the bytes of
//!   `"w:" + tokens.join(" ")`;
//! - character n-grams over the Unicode scalar values of the whole string,
//!   hashed as `"c:" + ngram`.
//!
//! Indices are `fnv1a64(bytes) mod hash_dims`. Collisions are accepted.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{ByteReader, ByteWriter};
use crate::digest::{sha256_hex, Fingerprint};
use crate::error::{Error, Result};

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET_BASIS, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn hash_token(token: &[u8], hash_dims: u64) -> u64 {
    fnv1a64(token) % hash_dims
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    /// `None` (JSON `null`) disables the family.
    pub word_ngrams: Option<NgramRange>,
    pub char_ngrams: Option<NgramRange>,
    pub hash_dims: u64,
    pub use_tfidf: bool,
    pub lowercase: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            word_ngrams: Some(NgramRange { min: 1, max: 2 }),
            char_ngrams: Some(NgramRange { min: 3, max: 5 }),
            hash_dims: 1 << 18,
            use_tfidf: true,
            lowercase: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.word_ngrams.is_none() && self.char_ngrams.is_none() {
            return Err(Error::Config(
                "at least one of word_ngrams and char_ngrams is required".into(),
            ));
        }
        for (name, r) in [("word_ngrams", self.word_ngrams), ("char_ngrams", self.char_ngrams)] {
            let Some(r) = r else { continue };
            if r.min == 0 || r.min > r.max {
                return Err(Error::Config(format!(
                    "{name}: need 1 <= min <= max, got {}..{}",
                    r.min, r.max
                )));
            }
        }
        if self.hash_dims < 2 || !self.hash_dims.is_power_of_two() || self.hash_dims > 1 << 32 {
            return Err(Error::Config(format!(
                "hash_dims must be a power of two in [2, 2^32], got {}",
                self.hash_dims
            )));
        }
        Ok(())
    }

    /// Stable digest of the configuration, used to tag hashed feature spaces.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("config serializes"))
    }

    /// Hashed indices of every configured n-gram, with repetition.
    fn indices(&self, text: &str) -> Vec<u32> {
        let text = if self.lowercase {
            std::borrow::Cow::Owned(text.to_lowercase())
        } else {
            std::borrow::Cow::Borrowed(text)
        };
        let mut out = Vec::new();
        let mut buf = Vec::new();

        let tokens: Vec<&str> = text.split_whitespace().collect();
        for n in self.word_ngrams.iter().flat_map(|r| r.min..=r.max) {
            for window in tokens.windows(n) {
                buf.clear();
                buf.extend_from_slice(b"w:");
                for (i, tok) in window.iter().enumerate() {
                    if i > 0 {
                        buf.push(b' ');
                    }
                    buf.extend_from_slice(tok.as_bytes());
                }
                out.push(hash_token(&buf, self.hash_dims) as u32);
            }
        }

        let chars: Vec<(usize, char)> = text.char_indices().collect();
        for n in self.char_ngrams.iter().flat_map(|r| r.min..=r.max) {
            if chars.len() < n {
                continue;
            }
            for start in 0..=chars.len() - n {
                let from = chars[start].0;
                let to = chars.get(start + n).map_or(text.len(), |c| c.0);
                buf.clear();
                buf.extend_from_slice(b"c:");
                buf.extend_from_slice(text[from..to].as_bytes());
                out.push(hash_token(&buf, self.hash_dims) as u32);
            }
        }
        out
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedFeaturizer {
    pub config: FeaturizerConfig,
    /// Present iff `config.use_tfidf`.
    pub idf: Option<BTreeMap<u32, f64>>,
    /// Digest of the fitting corpus.
    pub fitted_on: String,
}

/// Fit document frequencies: `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
pub fn fit<S: AsRef<str>>(texts: &[S], cfg: &FeaturizerConfig) -> Result<FittedFeaturizer> {
    cfg.validate()?;
    if texts.is_empty() {
        return Err(Error::EmptyInput("cannot fit a featurizer on zero documents".into()));
    }
    let mut corpus = Fingerprint::new();
    for t in texts {
        corpus.part(t.as_ref());
    }
    let idf = cfg.use_tfidf.then(|| {
        let mut df: HashMap<u32, usize> = HashMap::new();
        for t in texts {
            let distinct: HashSet<u32> = cfg.indices(t.as_ref()).into_iter().collect();
            for idx in distinct {
                *df.entry(idx).or_insert(0) += 1;
            }
        }
        let n = texts.len() as f64;
        df.into_iter()
            .map(|(idx, d)| (idx, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
            .collect()
    });
    Ok(FittedFeaturizer {
        config: cfg.clone(),
        idf,
        fitted_on: corpus.hex(),
    })
}

const FEAT_MAGIC: &[u8; 7] = b"RPFEAT1";
const FEAT_VERSION: u8 = 1;

impl FittedFeaturizer {
    /// Count n-grams, weight by idf (unseen indices get 1), L2-normalise.
    pub fn featurize(&self, text: &str) -> SparseVector {
        let counts = self.raw_weights(text);
        let norm = counts.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            return SparseVector::default();
        }
        SparseVector {
            entries: counts.into_iter().map(|(i, w)| (i, w / norm)).collect(),
        }
    }

    /// Weights before normalisation: n-gram counts, times idf when enabled.
    pub fn raw_weights(&self, text: &str) -> BTreeMap<u32, f64> {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for idx in self.config.indices(text) {
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
        if let Some(idf) = &self.idf {
            for (idx, w) in counts.iter_mut() {
                *w *= idf.get(idx).copied().unwrap_or(1.0);
            }
        }
        counts
    }

    /// Serialise to the `RPFEAT1` layout (all integers and floats
    /// little-endian):
    ///
    /// ```text
    /// "RPFEAT1" | version u8 | word min u32 | word max u32 | char min u32
    /// | char max u32 (0, 0 for a disabled family) | hash_dims u64 | use_tfidf u8 | lowercase u8
    /// | fitted_on (u32 len + utf8) | idf count u64 | (index u32, idf f64)*
    /// ```
    ///
    /// idf pairs are written in increasing index order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(FEAT_MAGIC);
        w.u8(FEAT_VERSION);
        let c = &self.config;
        for r in [c.word_ngrams, c.char_ngrams] {
            let r = r.unwrap_or(NgramRange { min: 0, max: 0 });
            w.u32(r.min as u32);
            w.u32(r.max as u32);
        }
        w.u64(c.hash_dims);
        w.u8(c.use_tfidf as u8);
        w.u8(c.lowercase as u8);
        w.str(&self.fitted_on);
        let empty = BTreeMap::new();
        let idf = self.idf.as_ref().unwrap_or(&empty);
        w.u64(idf.len() as u64);
        for (idx, v) in idf {
            w.u32(*idx);
            w.f64(*v);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::CorruptFeaturizer(m.to_string());
        let mut r = ByteReader::new(bytes);
        if r.take(7) != Some(FEAT_MAGIC.as_slice()) {
            return Err(bad("bad magic"));
        }
        if r.u8() != Some(FEAT_VERSION) {
            return Err(bad("unsupported version"));
        }
        let trunc = || bad("truncated");
        let mut range = || -> Result<Option<NgramRange>> {
            let min = r.u32().ok_or_else(trunc)? as usize;
            let max = r.u32().ok_or_else(trunc)? as usize;
            Ok((min, max) != (0, 0)).map(|on| on.then_some(NgramRange { min, max }))
        };
        let word_ngrams = range()?;
        let char_ngrams = range()?;
        let hash_dims = r.u64().ok_or_else(trunc)?;
        let use_tfidf = r.u8().ok_or_else(trunc)? != 0;
        let lowercase = r.u8().ok_or_else(trunc)? != 0;
        let config = FeaturizerConfig {
            word_ngrams,
            char_ngrams,
            hash_dims,
            use_tfidf,
            lowercase,
        };
        config.validate().map_err(|e| bad(&e.to_string()))?;
        let fitted_on = r.str().ok_or_else(trunc)?;
        let count = r.u64().ok_or_else(trunc)? as usize;
        if r.remaining() != count.saturating_mul(12) {
            return Err(trunc());
        }
        let mut idf = BTreeMap::new();
        for _ in 0..count {
            let idx = r.u32().ok_or_else(trunc)?;
            let v = r.f64().ok_or_else(trunc)?;
            if u64::from(idx) >= hash_dims || !(v >= 0.0) {
                return Err(bad("idf entry out of range"));
            }
            idf.insert(idx, v);
        }
        Ok(Self {
            config,
            idf: use_tfidf.then_some(idf),
            fitted_on,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FeaturizerConfig {
        FeaturizerConfig {
            hash_dims: 1 << 12,
            ..Default::default()
        }
    }

    #[test]
    fn fnv_reference_vectors() {
        // Published FNV-1a 64-bit test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
        assert_eq!(hash_token(b"", 1 << 18), 0xcbf29ce484222325 % (1 << 18));
    }

    #[test]
    fn idf_closed_forms() {
        let cfg = FeaturizerConfig {
            word_ngrams: Some(NgramRange { min: 1, max: 1 }),
            char_ngrams: None,
            hash_dims: 1 << 20,
            ..Default::default()
        };
        let one = fit(&["alpha beta"], &cfg).unwrap();
        assert!(one.idf.as_ref().unwrap().values().all(|&v| v == 1.0));

        let three = fit(&["shared rare", "shared", "shared"], &cfg).unwrap();
        let idf = three.idf.unwrap();
        let shared = hash_token(b"w:shared", cfg.hash_dims) as u32;
        let rare = hash_token(b"w:rare", cfg.hash_dims) as u32;
        assert_eq!(idf[&shared], 1.0);
        assert!((idf[&rare] - (2f64.ln() + 1.0)).abs() < 1e-12);
        assert!((idf[&rare] - 1.6931).abs() < 1e-4);
    }

    #[test]
    fn fit_rejects_empty_corpus() {
        let none: [&str; 0] = [];
        assert!(matches!(fit(&none, &small()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn featurize_basics() {
        let f = fit(&["the cat sat", "a dog ran"], &small()).unwrap();
        assert!(f.featurize("").is_zero());
        let v = f.featurize("the cat ran");
        assert_eq!(v, f.featurize("the cat ran"));
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(v.entries.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(v.entries.iter().all(|(i, _)| u64::from(*i) < f.config.hash_dims));
    }

    #[test]
    fn counts_without_tfidf() {
        let cfg = FeaturizerConfig {
            word_ngrams: Some(NgramRange { min: 1, max: 1 }),
            char_ngrams: None,
            use_tfidf: false,
            hash_dims: 1 << 20,
            ..Default::default()
        };
        let f = fit(&["x"], &cfg).unwrap();
        assert!(f.idf.is_none());
        let w = f.raw_weights("Go go GO stop");
        let go = hash_token(b"w:go", cfg.hash_dims) as u32;
        let stop = hash_token(b"w:stop", cfg.hash_dims) as u32;
        assert_eq!(w[&go], 3.0);
        assert_eq!(w[&stop], 1.0);
    }

    #[test]
    fn char_ngrams_respect_unicode() {
        let cfg = FeaturizerConfig {
            word_ngrams: None,
            char_ngrams: Some(NgramRange { min: 2, max: 2 }),
            use_tfidf: false,
            hash_dims: 1 << 20,
            lowercase: false,
        };
        let f = fit(&["x"], &cfg).unwrap();
        let w = f.raw_weights("éàé");
        assert_eq!(w.values().sum::<f64>(), 2.0);
        assert!(w.contains_key(&(hash_token("c:éà".as_bytes(), cfg.hash_dims) as u32)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small();
        cfg.hash_dims = 1000;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.word_ngrams = Some(NgramRange { min: 3, max: 2 });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let f = fit(&["one two", "two three"], &small()).unwrap();
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..7], b"RPFEAT1");
        assert_eq!(FittedFeaturizer::from_bytes(&bytes).unwrap(), f);
        assert!(FittedFeaturizer::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FittedFeaturizer::from_bytes(&bad).is_err());
    }
}
