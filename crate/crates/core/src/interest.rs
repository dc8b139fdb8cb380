//! Interestingness regression from precomputed clip features: a small
//! rectifier MLP with a single linear output, trained on mean squared error
//! with mini-batch Adam. Predictions are clamped to the [1, 5] rating scale.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{MAX_INTEREST, MIN_INTEREST};
use crate::nn::{mse, Network, NnError, Optimizer};

#[derive(Debug, Error, PartialEq)]
pub enum InterestError {
    #[error("sample {index}: expected {expected} features, got {got}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("sample {index}: label {label} outside [1, 5]")]
    LabelOutOfRange { index: usize, label: f64 },
    #[error("sample {index}: non-finite feature")]
    NonFinite { index: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("feature file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid regressor config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<FeatureSample>,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<FeatureSample>) -> Result<Self, InterestError> {
        if samples.len() < 2 {
            return Err(InterestError::TooFewSamples(samples.len()));
        }
        let dim = samples[0].features.len();
        for (index, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(InterestError::DimensionMismatch {
                    index,
                    expected: dim,
                    got: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(InterestError::NonFinite { index });
            }
            if !(MIN_INTEREST..=MAX_INTEREST).contains(&s.label) {
                return Err(InterestError::LabelOutOfRange { index, label: s.label });
            }
        }
        Ok(Self { samples, dim })
    }

    pub fn samples(&self) -> &[FeatureSample] {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shuffled disjoint (train, test) index sets covering every sample.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), InterestError> {
        let mut idx: Vec<usize> = (0..self.samples.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (self.samples.len() as f64 * train_fraction).round() as usize;
        let test = idx.split_off(n_train.min(idx.len()));
        if idx.is_empty() {
            return Err(InterestError::EmptySplit("train"));
        }
        if test.is_empty() {
            return Err(InterestError::EmptySplit("test"));
        }
        Ok((idx, test))
    }

    fn matrix(&self, indices: &[usize]) -> (Array2<f64>, Array1<f64>) {
        let mut x = Array2::zeros((indices.len(), self.dim));
        let mut y = Array1::zeros(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            x.row_mut(row).assign(&ArrayView1::from(&self.samples[i].features[..]));
            y[row] = self.samples[i].label;
        }
        (x, y)
    }

    /// CSV rows `chunk_id,label,f1,...,fd` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chunk_id,label");
        for j in 0..self.dim {
            let _ = write!(out, ",f{j}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{}", s.id, s.label);
            for v in &s.features {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the feature CSV. A first row whose label field is not numeric
    /// is a header.
    pub fn from_csv(text: &str) -> Result<Self, InterestError> {
        let mut samples = Vec::new();
        let mut first = true;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            let header = first && fields.get(1).is_some_and(|f| f.parse::<f64>().is_err());
            first = false;
            if header {
                continue;
            }
            if fields.len() < 3 {
                return Err(InterestError::Parse {
                    line,
                    reason: "expected chunk_id, label and at least one feature".into(),
                });
            }
            let num = |f: &str| {
                f.parse::<f64>().map_err(|_| InterestError::Parse {
                    line,
                    reason: format!("`{f}` is not a number"),
                })
            };
            samples.push(FeatureSample {
                id: fields[0].to_string(),
                label: num(fields[1])?,
                features: fields[2..].iter().map(|f| num(f)).collect::<Result<_, _>>()?,
            });
        }
        Self::new(samples)
    }
}

/// Synthetic dataset with a known target:
/// `y = clamp(1 + 4 * sigmoid(a . x), 1, 5) + N(0, noise^2)`, labels clamped
/// to [1, 5]. Features are standard normal and `a` is a random direction, so
/// `a . x` is itself standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub samples: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            dim: 512,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

pub fn planted_target(projection: f64) -> f64 {
    (1.0 + 4.0 / (1.0 + (-projection).exp())).clamp(MIN_INTEREST, MAX_INTEREST)
}

pub fn planted_dataset(config: &PlantedConfig) -> Result<Dataset, InterestError> {
    if config.dim == 0 || config.noise_sigma < 0.0 {
        return Err(InterestError::InvalidConfig("dim must be >= 1 and noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut direction: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);
    let noise = Normal::new(0.0, config.noise_sigma).expect("sigma validated");
    let samples = (0..config.samples)
        .map(|i| {
            let features: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let proj: f64 = features.iter().zip(&direction).map(|(x, a)| x * a).sum();
            let label = (planted_target(proj) + noise.sample(&mut rng)).clamp(MIN_INTEREST, MAX_INTEREST);
            FeatureSample {
                id: i.to_string(),
                features,
                label,
            }
        })
        .collect();
    Dataset::new(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on weights (not biases), `weight_decay / 2 * ||W||^2`.
    pub weight_decay: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128],
            batch_size: 64,
            epochs: 30,
            learning_rate: 3e-4,
            weight_decay: 1e-2,
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedRegressor {
    pub model: Network,
    /// Training-set MSE after each epoch.
    pub loss_history: Vec<f64>,
    pub test_mse: f64,
    pub test_mean_abs_error: f64,
    /// Mean of `prediction - label` on the test split.
    pub test_bias: f64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

pub fn train_regressor(data: &Dataset, config: &RegressorConfig) -> Result<TrainedRegressor, InterestError> {
    if config.batch_size == 0 || !(config.learning_rate > 0.0) || !(config.weight_decay >= 0.0) {
        return Err(InterestError::InvalidConfig("batch size and learning rate must be positive, weight decay non-negative".into()));
    }
    let (train_idx, test_idx) = data.split(config.train_fraction, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut model = Network::mlp(data.dim(), &config.hidden, 1, &mut rng)?;
    let mut opt = Optimizer::adam(config.learning_rate);
    let (train_x, train_y) = data.matrix(&train_idx);
    // Start the output at the label mean with zero output weights, so the
    // untrained hidden features add nothing and training fits the residual.
    let last = model.layers().len() - 1;
    model.layers_mut()[last].weights.fill(0.0);
    model.layers_mut()[last].biases[0] = train_y.mean().unwrap_or(0.0);

    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        // Cosine annealing over the run.
        let progress = epoch as f64 / config.epochs as f64;
        opt.set_learning_rate(config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let x = train_x.select(ndarray::Axis(0), batch);
            let pass = model.forward_pass(x.view())?;
            let out = pass.output();
            let n = batch.len() as f64;
            let mut grad = Array2::zeros(out.raw_dim());
            for (r, &i) in batch.iter().enumerate() {
                grad[[r, 0]] = 2.0 * (out[[r, 0]] - train_y[i]) / n;
            }
            let mut g = model.backward_pass(&pass, grad.view())?;
            if config.weight_decay > 0.0 {
                for (layer, (gw, _)) in model.layers().iter().zip(g.layers.iter_mut()) {
                    gw.scaled_add(config.weight_decay, &layer.weights);
                }
            }
            opt.step(&mut model, &g)?;
        }
        let pred = model.forward_batch(train_x.view())?.column(0).to_owned();
        loss_history.push(mse(train_y.view(), pred.view()));
    }

    let (test_x, test_y) = data.matrix(&test_idx);
    let pred = predict_batch(&model, &test_x)?;
    let n = test_y.len() as f64;
    Ok(TrainedRegressor {
        test_mse: mse(test_y.view(), pred.view()),
        test_mean_abs_error: test_y.iter().zip(&pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / n,
        test_bias: test_y.iter().zip(&pred).map(|(y, p)| p - y).sum::<f64>() / n,
        model,
        loss_history,
        train_indices: train_idx,
        test_indices: test_idx,
    })
}

/// Clamped score for one feature vector.
pub fn predict_interestingness(model: &Network, features: &[f64]) -> Result<f64, InterestError> {
    if model.output_dim() != 1 {
        return Err(InterestError::InvalidConfig("regressor must have one output".into()));
    }
    let out = model.forward(features).map_err(|e| match e {
        NnError::DimensionMismatch { expected, got } => InterestError::DimensionMismatch { index: 0, expected, got },
        other => other.into(),
    })?;
    Ok(out[0].clamp(MIN_INTEREST, MAX_INTEREST))
}

/// Row-wise clamped scores.
pub fn predict_batch(model: &Network, features: &Array2<f64>) -> Result<Array1<f64>, InterestError> {
    let out = model.forward_batch(features.view())?;
    Ok(out.column(0).mapv(|v| v.clamp(MIN_INTEREST, MAX_INTEREST)))
}
