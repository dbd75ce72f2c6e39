//! `RPMOD1` model files.
//!
//! Layout, little-endian throughout; strings are a u32 byte length followed
//! by UTF-8:
//!
//! ```text
//! "RPMOD1" | version u8 = 1
//! | label count u32 | label str*
//! | space tag u8 (0 hashed, 1 dense) | dim u64 | space id str
//! | weight count u64 | weight f64* | bias f64
//! | seed u64 | epochs u32 | learning_rate f64 | l2_lambda f64
//! | batch_size u32 | optimizer u8 (0 sgd, 1 adam) | dataset digest str
//! ```
//!
//! The space id is the featurizer config digest for hashed spaces and the
//! source model name for dense ones.

use std::path::Path;

use super::{FeatureSpace, LinearModel, Optimizer, TrainMeta};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"RPMOD1";
const VERSION: u8 = 1;

impl LinearModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u8(VERSION);
        w.u32(self.label_order.len() as u32);
        for l in &self.label_order {
            w.str(l);
        }
        match &self.feature_space {
            FeatureSpace::Hashed { dims, config_digest } => {
                w.u8(0);
                w.u64(*dims);
                w.str(config_digest);
            }
            FeatureSpace::Dense { dim, source_model } => {
                w.u8(1);
                w.u64(*dim as u64);
                w.str(source_model);
            }
        }
        w.u64(self.weights.len() as u64);
        for v in &self.weights {
            w.f64(*v);
        }
        w.f64(self.bias);
        let m = &self.train_meta;
        w.u64(m.seed);
        w.u32(m.epochs);
        w.f64(m.learning_rate);
        w.f64(m.l2_lambda);
        w.u32(m.batch_size);
        w.u8(match m.optimizer {
            Optimizer::Sgd => 0,
            Optimizer::Adam => 1,
        });
        w.str(&m.dataset_digest);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptModel(m.to_string());
        let mut r = ByteReader::new(bytes);
        if r.take(6) != Some(MAGIC.as_slice()) {
            return Err(corrupt("bad magic"));
        }
        match r.u8() {
            Some(VERSION) => {}
            Some(v) => return Err(corrupt(&format!("unsupported version {v}"))),
            None => return Err(corrupt("truncated")),
        }
        let t = || corrupt("truncated");
        let n_labels = r.u32().ok_or_else(t)? as usize;
        if n_labels < 2 || n_labels > r.remaining() {
            return Err(corrupt("bad label count"));
        }
        let label_order = (0..n_labels)
            .map(|_| r.str().ok_or_else(t))
            .collect::<Result<Vec<_>>>()?;
        let tag = r.u8().ok_or_else(t)?;
        let dim = r.u64().ok_or_else(t)?;
        let id = r.str().ok_or_else(t)?;
        let feature_space = match tag {
            0 => FeatureSpace::Hashed {
                dims: dim,
                config_digest: id,
            },
            1 => FeatureSpace::Dense {
                dim: dim as usize,
                source_model: id,
            },
            _ => return Err(corrupt("bad feature space tag")),
        };
        let n_weights = r.u64().ok_or_else(t)? as usize;
        if n_weights as u64 != dim || n_weights > r.remaining() / 8 {
            return Err(corrupt("weight count does not match feature space"));
        }
        let weights = (0..n_weights)
            .map(|_| r.f64().ok_or_else(t))
            .collect::<Result<Vec<_>>>()?;
        let bias = r.f64().ok_or_else(t)?;
        let train_meta = TrainMeta {
            seed: r.u64().ok_or_else(t)?,
            epochs: r.u32().ok_or_else(t)?,
            learning_rate: r.f64().ok_or_else(t)?,
            l2_lambda: r.f64().ok_or_else(t)?,
            batch_size: r.u32().ok_or_else(t)?,
            optimizer: match r.u8().ok_or_else(t)? {
                0 => Optimizer::Sgd,
                1 => Optimizer::Adam,
                _ => return Err(corrupt("bad optimizer tag")),
            },
            dataset_digest: r.str().ok_or_else(t)?,
        };
        if !r.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(LinearModel {
            label_order,
            weights,
            bias,
            feature_space,
            train_meta,
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
    use crate::model::{train, DenseVector, TrainConfig};

    fn model() -> LinearModel {
        let data = vec![
            (DenseVector(vec![1.0, 0.0, 0.5]), "F".to_string()),
            (DenseVector(vec![0.0, 1.0, -0.5]), "M".to_string()),
        ];
        let space = FeatureSpace::Dense {
            dim: 3,
            source_model: "enc".into(),
        };
        train(
            &data,
            space,
            &TrainConfig {
                epochs: 4,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let m = model();
        let back = LinearModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), m.to_bytes());
    }

    #[test]
    fn truncated_and_bad_magic() {
        let bytes = model().to_bytes();
        for cut in [0, 3, 7, 20, bytes.len() - 1] {
            let err = LinearModel::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(err.to_string().starts_with("corrupt_model"), "{err}");
        }
        let mut bad = bytes.clone();
        bad[6] = 9;
        assert!(matches!(LinearModel::from_bytes(&bad), Err(Error::CorruptModel(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(LinearModel::from_bytes(&extra).is_err());
    }
}
