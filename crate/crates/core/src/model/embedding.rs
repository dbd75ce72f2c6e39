//! `RPEMB1` embedding interchange files and the linear probe over them.
//!
//! Layout, little-endian:
//!
//! ```text
//! "RPEMB1" | version u8 = 1 | dim u32 | count u64
//! | count x ( id byte length u32 | UTF-8 id | dim x f32 )
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{train, DenseVector, FeatureSpace, LinearModel, TrainConfig};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"RPEMB1";
const VERSION: u8 = 1;

/// Frozen sentence embeddings keyed by example id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub source_model: String,
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, source_model: &str) -> Result<Self> {
        if dim == 0 {
            return Err(Error::CorruptEmbeddings("dim must be positive".into()));
        }
        Ok(Self {
            dim,
            source_model: source_model.to_string(),
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn insert(&mut self, id: &str, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::CorruptEmbeddings(format!(
                "vector for {id:?} has length {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptEmbeddings(format!("non-finite value for {id:?}")));
        }
        if self.index.contains_key(id) {
            return Err(Error::CorruptEmbeddings(format!("duplicate id {id:?}")));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.vectors.push(vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn dense(&self, id: &str) -> Option<DenseVector> {
        self.get(id)
            .map(|v| DenseVector(v.iter().map(|&x| f64::from(x)).collect()))
    }

    /// Ids in file order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_space(&self) -> FeatureSpace {
        FeatureSpace::Dense {
            dim: self.dim,
            source_model: self.source_model.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u8(VERSION);
        w.u32(self.dim as u32);
        w.u64(self.ids.len() as u64);
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            w.str(id);
            for x in v {
                w.f32(*x);
            }
        }
        w.buf
    }

    /// Parse an embedding file. The format does not carry the encoder name,
    /// so the caller supplies it.
    pub fn from_bytes(bytes: &[u8], source_model: &str) -> Result<Self> {
        let bad = |m: &str| Error::CorruptEmbeddings(m.to_string());
        let mut r = ByteReader::new(bytes);
        if r.take(6) != Some(MAGIC.as_slice()) {
            return Err(bad("bad magic"));
        }
        if r.u8() != Some(VERSION) {
            return Err(bad("unsupported version"));
        }
        let t = || bad("truncated");
        let dim = r.u32().ok_or_else(t)? as usize;
        let count = r.u64().ok_or_else(t)?;
        let mut table = Self::new(dim, source_model)?;
        for _ in 0..count {
            let id = r.str().ok_or_else(t)?;
            let raw = r.take(dim * 4).ok_or_else(t)?;
            let v = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            table.insert(&id, v)?;
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(table)
    }

    pub fn load(path: &Path, source_model: &str) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?, source_model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Train a single linear layer over frozen embeddings. Every labeled id
/// must have an embedding.
pub fn train_probe(
    table: &EmbeddingTable,
    labels: &BTreeMap<String, String>,
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    let missing: Vec<String> = labels.keys().filter(|id| table.get(id).is_none()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings(missing));
    }
    let data: Vec<(DenseVector, String)> = labels
        .iter()
        .map(|(id, label)| (table.dense(id).expect("checked above"), label.clone()))
        .collect();
    train(&data, table.feature_space(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let mut t = EmbeddingTable::new(2, "enc").unwrap();
        t.insert("a", vec![1.0, -2.0]).unwrap();
        let bytes = t.to_bytes();
        let mut expected = b"RPEMB1".to_vec();
        expected.push(1);
        expected.extend(2u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.push(b'a');
        expected.extend(1f32.to_le_bytes());
        expected.extend((-2f32).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(EmbeddingTable::from_bytes(&bytes, "enc").unwrap(), t);
    }

    #[test]
    fn rejects_bad_tables() {
        let mut t = EmbeddingTable::new(1, "enc").unwrap();
        t.insert("a", vec![0.5]).unwrap();
        assert!(t.insert("a", vec![0.5]).is_err());
        assert!(t.insert("b", vec![0.5, 1.0]).is_err());
        assert!(t.insert("c", vec![f32::NAN]).is_err());
        let bytes = t.to_bytes();
        assert!(EmbeddingTable::from_bytes(&bytes[..bytes.len() - 1], "enc").is_err());
    }

    #[test]
    fn probe_reports_missing_ids() {
        let mut t = EmbeddingTable::new(2, "enc").unwrap();
        t.insert("a", vec![1.0, 0.0]).unwrap();
        let labels: BTreeMap<String, String> = [
            ("a".into(), "F".into()),
            ("b".into(), "M".into()),
            ("c".into(), "M".into()),
        ]
        .into();
        match train_probe(&t, &labels, &TrainConfig::dense_default()) {
            Err(Error::MissingEmbeddings(ids)) => assert_eq!(ids, vec!["b", "c"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probe_fits_separable_pair() {
        let mut t = EmbeddingTable::new(2, "enc").unwrap();
        t.insert("a", vec![1.0, 0.0]).unwrap();
        t.insert("b", vec![0.0, 1.0]).unwrap();
        let labels: BTreeMap<String, String> = [("a".into(), "F".into()), ("b".into(), "M".into())].into();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 100,
            ..TrainConfig::dense_default()
        };
        let m = train_probe(&t, &labels, &cfg).unwrap();
        assert_eq!(m.predict(&t.dense("a").unwrap()).unwrap().label, "F");
        assert_eq!(m.predict(&t.dense("b").unwrap()).unwrap().label, "M");
        assert_eq!(m.feature_space, t.feature_space());
    }
}
