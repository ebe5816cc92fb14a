//! Probabilistic classifiers trained from scratch: a softmax-linear model and
//! fully connected MLPs, both ending in a softmax over `c` classes.

mod checkpoint;
mod gradcheck;
mod network;
mod train;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, gradient_check_at, FD_STEP};
pub use network::loss_and_gradient;
pub use train::{train, Adam};

/// Floor applied to the target probability inside the log.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    SoftmaxLinear,
    Mlp { hidden: Vec<usize>, activation: Activation },
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::SoftmaxLinear => f.write_str("softmax-linear"),
            ModelKind::Mlp { hidden, activation } => {
                let sizes: Vec<String> = hidden.iter().map(ToString::to_string).collect();
                let act = match activation {
                    Activation::Relu => "relu",
                    Activation::Tanh => "tanh",
                };
                write!(f, "mlp[{}]-{act}", sizes.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn softmax_linear(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec { kind: ModelKind::SoftmaxLinear, input_dim, num_classes, init_seed: 0 }
    }

    pub fn mlp(input_dim: usize, num_classes: usize, hidden: &[usize], activation: Activation) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp { hidden: hidden.to_vec(), activation },
            input_dim,
            num_classes,
            init_seed: 0,
        }
    }

    pub fn with_seed(mut self, init_seed: u64) -> Self {
        self.init_seed = init_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.num_classes < 1 {
            return Err(Error::InvalidConfig("model input_dim and num_classes must be >= 1".into()));
        }
        if let ModelKind::Mlp { hidden, .. } = &self.kind {
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(Error::InvalidConfig(format!("{}: hidden sizes must be >= 1", self.kind)));
            }
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        if let ModelKind::Mlp { hidden, .. } = &self.kind {
            dims.extend_from_slice(hidden);
        }
        dims.push(self.num_classes);
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub(crate) fn activation(&self) -> Option<Activation> {
        match &self.kind {
            ModelKind::SoftmaxLinear => None,
            ModelKind::Mlp { activation, .. } => Some(*activation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub shuffle_seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 20,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            shuffle_seed: 0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !beta_ok(self.adam_beta1) || !beta_ok(self.adam_beta2) {
            return Err(Error::InvalidConfig("adam betas must lie in (0, 1)".into()));
        }
        if !(self.adam_epsilon > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("adam_epsilon must be > 0 and weight_decay >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    spec: ModelSpec,
    parameters: Vec<f64>,
    train_log: Vec<EpochLoss>,
}

impl TrainedModel {
    pub fn new(spec: ModelSpec, parameters: Vec<f64>, train_log: Vec<EpochLoss>) -> Result<Self> {
        spec.validate()?;
        if parameters.len() != spec.param_count() {
            return Err(Error::DimensionMismatch { expected: spec.param_count(), found: parameters.len() });
        }
        if parameters.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("model parameters must be finite".into()));
        }
        Ok(TrainedModel { spec, parameters, train_log })
    }

    /// All weights and biases zero: predicts the uniform distribution.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let n = spec.param_count();
        TrainedModel::new(spec, vec![0.0; n], Vec::new())
    }

    /// Freshly initialized, untrained parameters.
    pub fn initialized(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let params = network::init_params(&spec);
        TrainedModel::new(spec, params, Vec::new())
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    pub fn train_log(&self) -> &[EpochLoss] {
        &self.train_log
    }

    pub fn predict(&self, x: &[f64]) -> Result<ProbVector> {
        predict(self, x)
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProbVector("empty".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidProbVector("entries must be finite and >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidProbVector(format!("entries sum to {sum}")));
        }
        Ok(ProbVector(probs))
    }

    pub fn uniform(c: usize) -> Self {
        ProbVector(vec![1.0 / c as f64; c])
    }

    pub fn one_hot(c: usize, class: usize) -> Self {
        let mut v = vec![0.0; c];
        v[class] = 1.0;
        ProbVector(v)
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        ProbVector(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLogits);
    }
    let mut probs = logits.to_vec();
    softmax_in_place(&mut probs);
    Ok(ProbVector(probs))
}

/// `-ln(max(p[target], 1e-12))`.
pub fn cross_entropy(pred: &ProbVector, target_class: usize) -> Result<f64> {
    let p = pred
        .0
        .get(target_class)
        .ok_or(Error::ClassOutOfRange { class: target_class, num_classes: pred.len() })?;
    Ok(-p.max(LOG_CLAMP).ln())
}

pub fn predict(model: &TrainedModel, x: &[f64]) -> Result<ProbVector> {
    if x.len() != model.spec.input_dim {
        return Err(Error::DimensionMismatch { expected: model.spec.input_dim, found: x.len() });
    }
    let rows = ndarray::ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let probs = network::predict_rows(&model.spec, &model.parameters, rows);
    Ok(ProbVector(probs.into_raw_vec_and_offset().0))
}

pub fn predict_class(model: &TrainedModel, x: &[f64]) -> Result<usize> {
    Ok(predict(model, x)?.argmax())
}

/// Predictions for every example of `data`, in order.
pub fn predict_dataset(model: &TrainedModel, data: &Dataset) -> Result<Vec<ProbVector>> {
    const CHUNK: usize = 512;
    let d = model.spec.input_dim;
    if data.feature_dim() != d && !data.is_empty() {
        return Err(Error::DimensionMismatch { expected: d, found: data.feature_dim() });
    }
    let mut out = Vec::with_capacity(data.len());
    let mut buf = Vec::with_capacity(CHUNK * d);
    for chunk in data.examples().chunks(CHUNK) {
        buf.clear();
        for ex in chunk {
            buf.extend_from_slice(ex.features());
        }
        let rows = ndarray::ArrayView2::from_shape((chunk.len(), d), &buf).expect("chunk view");
        let probs = network::predict_rows(&model.spec, &model.parameters, rows);
        out.extend(probs.rows().into_iter().map(|r| ProbVector(r.to_vec())));
    }
    Ok(out)
}
