//! Binary logistic regression over sparse hashed features or dense
//! embeddings.
//!
//! Both vector kinds go through the same optimiser via [`FeatureVector`].
//! Training minimises
//!
//! ```text
//! mean_i [ softplus(w.x_i + b) - y_i (w.x_i + b) ] + (l2_lambda / 2) |w|^2
//! ```
//!
//! with mini-batches drawn from a seeded per-epoch shuffle. The bias is not
//! regularised. Plain gradient descent is bit-reproducible for a given
//! input and config; the Adam mode is provided but carries no such promise
//! across platforms.

mod embedding;
mod io;

pub use embedding::{train_probe, EmbeddingTable};

use serde::{Deserialize, Serialize};

use crate::digest::Fingerprint;
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::rng::SeededRng;

/// Vectors the optimiser can consume.
pub trait FeatureVector {
    fn dot(&self, weights: &[f64]) -> f64;
    /// `target += alpha * self`.
    fn add_scaled(&self, alpha: f64, target: &mut [f64]);
    /// Whether the vector lives in a space of dimension `dim`.
    fn fits(&self, dim: usize) -> bool;
    fn is_finite(&self) -> bool;
    /// Length for dense vectors, one past the largest index for sparse ones.
    fn extent(&self) -> usize;
    fn fingerprint(&self, fp: &mut Fingerprint);
}

impl FeatureVector for SparseVector {
    fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| weights[i as usize] * v).sum()
    }

    fn add_scaled(&self, alpha: f64, target: &mut [f64]) {
        for &(i, v) in &self.entries {
            target[i as usize] += alpha * v;
        }
    }

    fn fits(&self, dim: usize) -> bool {
        self.entries.last().is_none_or(|&(i, _)| (i as usize) < dim)
    }

    fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, v)| v.is_finite())
    }

    fn extent(&self) -> usize {
        self.entries.last().map_or(0, |&(i, _)| i as usize + 1)
    }

    fn fingerprint(&self, fp: &mut Fingerprint) {
        let mut bytes = Vec::with_capacity(self.entries.len() * 12);
        for (i, v) in &self.entries {
            bytes.extend_from_slice(&i.to_le_bytes());
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fp.part(bytes);
    }
}

/// Dense vector, typically a frozen encoder embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector(pub Vec<f64>);

impl FeatureVector for DenseVector {
    fn dot(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(x, w)| x * w).sum()
    }

    fn add_scaled(&self, alpha: f64, target: &mut [f64]) {
        for (t, x) in target.iter_mut().zip(&self.0) {
            *t += alpha * x;
        }
    }

    fn fits(&self, dim: usize) -> bool {
        self.0.len() == dim
    }

    fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn extent(&self) -> usize {
        self.0.len()
    }

    fn fingerprint(&self, fp: &mut Fingerprint) {
        let bytes: Vec<u8> = self.0.iter().flat_map(|v| v.to_le_bytes()).collect();
        fp.part(bytes);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureSpace {
    /// Hashed n-grams; `config_digest` identifies the featurizer config.
    Hashed { dims: u64, config_digest: String },
    /// Dense embeddings from `source_model`.
    Dense { dim: usize, source_model: String },
}

impl FeatureSpace {
    pub fn dim(&self) -> usize {
        match self {
            FeatureSpace::Hashed { dims, .. } => *dims as usize,
            FeatureSpace::Dense { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u32,
    pub l2_lambda: f64,
    pub batch_size: u32,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::sparse_default()
    }
}

impl TrainConfig {
    /// Defaults for the hashed n-gram baseline.
    pub fn sparse_default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 3,
            l2_lambda: 1e-4,
            batch_size: 32,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }

    /// Defaults for a linear head over frozen embeddings: learning rate
    /// 2e-5 for 3 epochs, no weight decay.
    pub fn dense_default() -> Self {
        Self {
            learning_rate: 2e-5,
            l2_lambda: 0.0,
            ..Self::sparse_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.l2_lambda >= 0.0) || !self.l2_lambda.is_finite() {
            return Err(Error::Config("l2_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: u32,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub batch_size: u32,
    pub optimizer: Optimizer,
    pub dataset_digest: String,
}

/// A trained binary classifier. `label_order[1]` is the positive label.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub label_order: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_space: FeatureSpace,
    pub train_meta: TrainMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub score: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic loss of one example, `y` in {0, 1}.
pub fn logistic_loss<V: FeatureVector>(weights: &[f64], bias: f64, x: &V, y: f64) -> f64 {
    let z = x.dot(weights) + bias;
    softplus(z) - y * z
}

/// d loss / d z for one example.
fn residual<V: FeatureVector>(weights: &[f64], bias: f64, x: &V, y: f64) -> f64 {
    sigmoid(x.dot(weights) + bias) - y
}

/// Analytic gradient of [`logistic_loss`] with respect to (weights, bias).
pub fn logistic_gradient<V: FeatureVector>(weights: &[f64], bias: f64, x: &V, y: f64) -> (Vec<f64>, f64) {
    let residual = residual(weights, bias, x, y);
    let mut grad = vec![0.0; weights.len()];
    x.add_scaled(residual, &mut grad);
    (grad, residual)
}

/// Regularised mean training objective.
pub fn objective<'a, V: FeatureVector + 'a>(
    weights: &[f64],
    bias: f64,
    data: impl ExactSizeIterator<Item = (&'a V, f64)>,
    l2_lambda: f64,
) -> f64 {
    let n = data.len() as f64;
    let loss = data.map(|(x, y)| logistic_loss(weights, bias, x, y)).sum::<f64>() / n;
    loss + 0.5 * l2_lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Per-epoch objective values recorded during training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epoch_objective: Vec<f64>,
}

pub fn train<V: FeatureVector>(data: &[(V, String)], space: FeatureSpace, cfg: &TrainConfig) -> Result<LinearModel> {
    train_with_history(data, space, cfg).map(|(m, _)| m)
}

pub fn train_with_history<V: FeatureVector>(
    data: &[(V, String)],
    space: FeatureSpace,
    cfg: &TrainConfig,
) -> Result<(LinearModel, TrainHistory)> {
    cfg.validate()?;
    let mut labels: Vec<String> = data.iter().map(|(_, l)| l.clone()).collect();
    labels.sort();
    labels.dedup();
    match labels.len() {
        0 | 1 => {
            return Err(Error::DegenerateClass(format!(
                "training needs two labels, found {labels:?}"
            )))
        }
        2 => {}
        n => return Err(Error::Config(format!("binary training only, found {n} labels"))),
    }
    let dim = space.dim();
    let mut fp = Fingerprint::new();
    for (i, (x, label)) in data.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite(i));
        }
        if !x.fits(dim) {
            return Err(Error::FeatureSpace(format!("example {i} does not fit dimension {dim}")));
        }
        x.fingerprint(&mut fp);
        fp.part(label);
    }
    let targets: Vec<(&V, f64)> = data
        .iter()
        .map(|(x, l)| (x, if *l == labels[1] { 1.0 } else { 0.0 }))
        .collect();

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let mut history = TrainHistory::default();
    let mut adam = (cfg.optimizer == Optimizer::Adam).then(|| AdamState::new(dim));
    let lr = cfg.learning_rate;
    let mut residuals = Vec::with_capacity(cfg.batch_size as usize);

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size as usize) {
            let scale = 1.0 / batch.len() as f64;
            residuals.clear();
            residuals.extend(batch.iter().map(|&i| {
                let (x, y) = targets[i];
                residual(&weights, bias, x, y)
            }));
            let bias_grad = residuals.iter().sum::<f64>() * scale;
            match adam.as_mut() {
                None => {
                    if cfg.l2_lambda > 0.0 {
                        let decay = 1.0 - lr * cfg.l2_lambda;
                        weights.iter_mut().for_each(|w| *w *= decay);
                    }
                    for (&i, r) in batch.iter().zip(&residuals) {
                        targets[i].0.add_scaled(-lr * r * scale, &mut weights);
                    }
                    bias -= lr * bias_grad;
                }
                Some(state) => {
                    let mut grad: Vec<f64> = weights.iter().map(|w| cfg.l2_lambda * w).collect();
                    for (&i, r) in batch.iter().zip(&residuals) {
                        targets[i].0.add_scaled(r * scale, &mut grad);
                    }
                    state.step(lr, &mut weights, &grad, &mut bias, bias_grad);
                }
            }
        }
        history.epoch_objective.push(objective(
            &weights,
            bias,
            targets.iter().map(|&(x, y)| (x, y)),
            cfg.l2_lambda,
        ));
    }

    let model = LinearModel {
        label_order: labels,
        weights,
        bias,
        feature_space: space,
        train_meta: TrainMeta {
            seed: cfg.seed,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            l2_lambda: cfg.l2_lambda,
            batch_size: cfg.batch_size,
            optimizer: cfg.optimizer,
            dataset_digest: fp.hex(),
        },
    };
    Ok((model, history))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    mb: f64,
    vb: f64,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            mb: 0.0,
            vb: 0.0,
            t: 0,
        }
    }

    fn step(&mut self, lr: f64, weights: &mut [f64], grad: &[f64], bias: &mut f64, bias_grad: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let update = |m: &mut f64, v: &mut f64, g: f64| {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS)
        };
        for i in 0..weights.len() {
            weights[i] -= update(&mut self.m[i], &mut self.v[i], grad[i]);
        }
        *bias -= update(&mut self.mb, &mut self.vb, bias_grad);
    }
}

impl LinearModel {
    pub fn positive_label(&self) -> &str {
        &self.label_order[1]
    }

    /// Score `sigmoid(w.x + b)`; the positive label wins ties at 0.5.
    pub fn predict<V: FeatureVector>(&self, x: &V) -> Result<Prediction> {
        if !x.fits(self.weights.len()) {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.extent(),
            });
        }
        let score = sigmoid(x.dot(&self.weights) + self.bias);
        let label = if score >= 0.5 {
            &self.label_order[1]
        } else {
            &self.label_order[0]
        };
        Ok(Prediction {
            label: label.clone(),
            score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_space(dim: usize) -> FeatureSpace {
        FeatureSpace::Dense {
            dim,
            source_model: "test".into(),
        }
    }

    fn two_points() -> Vec<(DenseVector, String)> {
        vec![
            (DenseVector(vec![1.0, 0.0]), "F".to_string()),
            (DenseVector(vec![0.0, 1.0]), "M".to_string()),
        ]
    }

    #[test]
    fn separable_pair_is_learned() {
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 200,
            l2_lambda: 0.0,
            ..TrainConfig::sparse_default()
        };
        let model = train(&two_points(), dense_space(2), &cfg).unwrap();
        for (x, label) in two_points() {
            assert_eq!(model.predict(&x).unwrap().label, label);
        }
        assert_eq!(model.label_order, vec!["F", "M"]);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let a = train(&two_points(), dense_space(2), &cfg).unwrap();
        let b = train(&two_points(), dense_space(2), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
            b.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn training_errors() {
        let one_label = vec![(DenseVector(vec![1.0]), "F".to_string())];
        assert!(matches!(
            train(&one_label, dense_space(1), &TrainConfig::default()),
            Err(Error::DegenerateClass(_))
        ));
        let nan = vec![
            (DenseVector(vec![f64::NAN]), "F".to_string()),
            (DenseVector(vec![1.0]), "M".to_string()),
        ];
        assert!(matches!(
            train(&nan, dense_space(1), &TrainConfig::default()),
            Err(Error::NonFinite(0))
        ));
        assert!(matches!(
            train(&two_points(), dense_space(3), &TrainConfig::default()),
            Err(Error::FeatureSpace(_))
        ));
    }

    #[test]
    fn zero_model_scores_half() {
        let mut model = train(&two_points(), dense_space(2), &TrainConfig::default()).unwrap();
        model.weights = vec![0.0, 0.0];
        model.bias = 0.0;
        let p = model.predict(&DenseVector(vec![3.0, -2.0])).unwrap();
        assert_eq!(p.score, 0.5);
        assert_eq!(p.label, "M");
    }

    #[test]
    fn sigmoid_of_ln3() {
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) > 0.0 || sigmoid(-800.0) == 0.0);
        assert!(sigmoid(40.0) < 1.0 + f64::EPSILON);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let model = train(&two_points(), dense_space(2), &TrainConfig::default()).unwrap();
        assert!(matches!(
            model.predict(&DenseVector(vec![1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
        let sparse = SparseVector {
            entries: vec![(5, 1.0)],
        };
        assert!(model.predict(&sparse).is_err());
    }

    #[test]
    fn adam_mode_trains() {
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 100,
            optimizer: Optimizer::Adam,
            ..TrainConfig::sparse_default()
        };
        let model = train(&two_points(), dense_space(2), &cfg).unwrap();
        for (x, label) in two_points() {
            assert_eq!(model.predict(&x).unwrap().label, label);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let w = vec![0.3, -0.7, 1.1];
        let x = DenseVector(vec![0.5, 2.0, -1.5]);
        let b = 0.2;
        let (g, gb) = logistic_gradient(&w, b, &x, 1.0);
        let h = 1e-6;
        for k in 0..3 {
            let mut wp = w.clone();
            wp[k] += h;
            let mut wm = w.clone();
            wm[k] -= h;
            let fd = (logistic_loss(&wp, b, &x, 1.0) - logistic_loss(&wm, b, &x, 1.0)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7);
        }
        let fd = (logistic_loss(&w, b + h, &x, 1.0) - logistic_loss(&w, b - h, &x, 1.0)) / (2.0 * h);
        assert!((fd - gb).abs() < 1e-7);
    }
}
