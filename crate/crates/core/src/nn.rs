//! Fully connected feed-forward networks with hand-written reverse-mode
//! gradients, Adam/SGD updates and a JSON checkpoint format.
//!
//! Weights of a layer are stored `outputs x inputs`, so a batch of row
//! vectors `X` maps to `X * W^T + b`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("network needs at least one layer")]
    NoLayers,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Per-parameter tensors shaped like a network's layers. Used for gradients
/// and optimizer moments alike.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.biases.raw_dim())))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            *w *= factor;
            *b *= factor;
        }
    }

    /// Flattened in checkpoint order: per layer, weights row-major then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Cached activations of a batched forward pass, consumed by
/// [`Network::backward_pass`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `inputs[l]` is the input to layer `l`; the final entry is the output.
    inputs: Vec<Array2<f64>>,
    preactivations: Vec<Array2<f64>>,
}

impl ForwardPass {
    pub fn output(&self) -> ArrayView2<'_, f64> {
        self.inputs.last().expect("forward pass is never empty").view()
    }

    pub fn preactivations(&self) -> &[Array2<f64>] {
        &self.preactivations
    }
}

impl Network {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::NoLayers);
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(NnError::DimensionMismatch {
                    expected: pair[0].outputs(),
                    got: pair[1].inputs(),
                });
            }
        }
        for l in &layers {
            if l.biases.len() != l.outputs() {
                return Err(NnError::DimensionMismatch {
                    expected: l.outputs(),
                    got: l.biases.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialized network: He-uniform for rectifier layers,
    /// Xavier-uniform for linear ones, zero biases.
    pub fn new(input_dim: usize, spec: &[(usize, Activation)], rng: &mut impl Rng) -> Result<Self, NnError> {
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(spec.len());
        for &(units, activation) in spec {
            let limit = match activation {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                Activation::Linear => (6.0 / (fan_in + units) as f64).sqrt(),
            };
            let weights = Array2::from_shape_simple_fn((units, fan_in), || rng.random_range(-limit..=limit));
            layers.push(Layer {
                weights,
                biases: Array1::zeros(units),
                activation,
            });
            fan_in = units;
        }
        Self::from_layers(layers)
    }

    /// Rectifier hidden layers and a linear output layer.
    pub fn mlp(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut impl Rng) -> Result<Self, NnError> {
        let spec: Vec<_> = hidden
            .iter()
            .map(|&h| (h, Activation::Relu))
            .chain(std::iter::once((output_dim, Activation::Linear)))
            .collect();
        Self::new(input_dim, &spec, rng)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input.len())?;
        let mut x = Array1::from(input.to_vec());
        for l in &self.layers {
            let mut z = l.weights.dot(&x) + &l.biases;
            z.mapv_inplace(|v| l.activation.apply(v));
            x = z;
        }
        Ok(x.to_vec())
    }

    /// Row-wise forward over a batch.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(inputs.ncols())?;
        let mut x = inputs.to_owned();
        for l in &self.layers {
            let mut z = x.dot(&l.weights.t()) + &l.biases;
            z.mapv_inplace(|v| l.activation.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward_pass(&self, inputs: ArrayView2<'_, f64>) -> Result<ForwardPass, NnError> {
        self.check_input(inputs.ncols())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(inputs.to_owned());
        for l in &self.layers {
            let z = acts.last().unwrap().dot(&l.weights.t()) + &l.biases;
            acts.push(z.mapv(|v| l.activation.apply(v)));
            pre.push(z);
        }
        Ok(ForwardPass {
            inputs: acts,
            preactivations: pre,
        })
    }

    /// Gradients of `sum_rows(output . output_grads)` with respect to every
    /// parameter, given a cached forward pass.
    pub fn backward_pass(&self, pass: &ForwardPass, output_grads: ArrayView2<'_, f64>) -> Result<Gradients, NnError> {
        let out = pass.output();
        if output_grads.dim() != out.dim() {
            return Err(NnError::DimensionMismatch {
                expected: out.len(),
                got: output_grads.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grads.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let mut delta = upstream;
            Zip::from(&mut delta)
                .and(&pass.preactivations[i])
                .for_each(|d, &z| *d *= l.activation.derivative(z));
            let dw = delta.t().dot(&pass.inputs[i]);
            let db = delta.sum_axis(Axis(0));
            upstream = if i > 0 { delta.dot(&l.weights) } else { Array2::zeros((0, 0)) };
            grads.push((dw, db));
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Single-sample convenience over [`Self::backward_pass`].
    pub fn backward(&self, input: &[f64], output_gradient: &[f64]) -> Result<Gradients, NnError> {
        self.check_input(input.len())?;
        if output_gradient.len() != self.output_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.output_dim(),
                got: output_gradient.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let g = ArrayView2::from_shape((1, output_gradient.len()), output_gradient).expect("row view");
        let pass = self.forward_pass(x)?;
        self.backward_pass(&pass, g)
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Network, tau: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut dst.weights)
                .and(&src.weights)
                .for_each(|d, &s| *d = tau * s + (1.0 - tau) * *d);
            Zip::from(&mut dst.biases)
                .and(&src.biases)
                .for_each(|d, &s| *d = tau * s + (1.0 - tau) * *d);
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    /// Mutable access to the `index`-th parameter in flat order.
    pub fn param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if index < nw {
                return l.weights.as_slice_mut().map(|s| &mut s[index]);
            }
            index -= nw;
            if index < l.biases.len() {
                return l.biases.get_mut(index);
            }
            index -= l.biases.len();
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, got: usize) -> Result<(), NnError> {
        if got != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerCheckpoint {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, NnError> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported format version {}",
                ckpt.format_version
            )));
        }
        let layers = ckpt
            .layers
            .iter()
            .map(|l| {
                let weights = Array2::from_shape_vec((l.outputs, l.inputs), l.weights.clone())
                    .map_err(|e| NnError::Checkpoint(e.to_string()))?;
                if l.biases.len() != l.outputs {
                    return Err(NnError::Checkpoint("bias length mismatch".into()));
                }
                Ok(Layer {
                    weights,
                    biases: Array1::from(l.biases.clone()),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let net = Self::from_layers(layers)?;
        if net.input_dim() != ckpt.input_dim || net.output_dim() != ckpt.output_dim {
            return Err(NnError::Checkpoint("declared dims disagree with layers".into()));
        }
        if !net.is_finite() {
            return Err(NnError::Checkpoint("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ckpt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<LayerCheckpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// Row-major, `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum OptimizerMethod {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl OptimizerMethod {
    pub fn adam() -> Self {
        OptimizerMethod::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    method: OptimizerMethod,
    learning_rate: f64,
    first: Option<Gradients>,
    second: Option<Gradients>,
    step: u64,
}

impl Optimizer {
    pub fn new(method: OptimizerMethod, learning_rate: f64) -> Self {
        Self {
            method,
            learning_rate,
            first: None,
            second: None,
            step: 0,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerMethod::adam(), learning_rate)
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerMethod::Sgd, learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Changes the step size; moment estimates are kept.
    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.learning_rate = learning_rate;
    }

    /// Applies one descent step in place.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NnError> {
        if grads.layers.len() != net.layers.len() {
            return Err(NnError::DimensionMismatch {
                expected: net.layers.len(),
                got: grads.layers.len(),
            });
        }
        for (l, (gw, gb)) in net.layers.iter().zip(&grads.layers) {
            if gw.dim() != l.weights.dim() || gb.len() != l.biases.len() {
                return Err(NnError::DimensionMismatch {
                    expected: l.weights.len() + l.biases.len(),
                    got: gw.len() + gb.len(),
                });
            }
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.method {
            OptimizerMethod::Sgd => {
                for (l, (gw, gb)) in net.layers.iter_mut().zip(&grads.layers) {
                    l.weights.scaled_add(-lr, gw);
                    l.biases.scaled_add(-lr, gb);
                }
            }
            OptimizerMethod::Adam { beta1, beta2, epsilon } => {
                let first = self.first.get_or_insert_with(|| Gradients::zeros_like(net));
                let second = self.second.get_or_insert_with(|| Gradients::zeros_like(net));
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                };
                for (i, l) in net.layers.iter_mut().enumerate() {
                    let (gw, gb) = &grads.layers[i];
                    let (mw, mb) = &mut first.layers[i];
                    let (vw, vb) = &mut second.layers[i];
                    Zip::from(&mut l.weights)
                        .and(gw)
                        .and(mw)
                        .and(vw)
                        .for_each(|p, &g, m, v| update(p, g, m, v));
                    Zip::from(&mut l.biases)
                        .and(gb)
                        .and(mb)
                        .and(vb)
                        .for_each(|p, &g, m, v| update(p, g, m, v));
                }
            }
        }
        Ok(())
    }
}

/// A scalar loss on the network output with its gradient.
pub trait Loss {
    fn value(&self, output: &[f64]) -> f64;
    fn gradient(&self, output: &[f64]) -> Vec<f64>;
}

/// `0.5 * ||output - target||^2`.
#[derive(Debug, Clone)]
pub struct SquaredError {
    pub target: Vec<f64>,
}

impl Loss for SquaredError {
    fn value(&self, output: &[f64]) -> f64 {
        0.5 * output
            .iter()
            .zip(&self.target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
    }

    fn gradient(&self, output: &[f64]) -> Vec<f64> {
        output.iter().zip(&self.target).map(|(o, t)| o - t).collect()
    }
}

/// Mean squared error `(1/n) * sum (y - y_hat)^2`.
pub fn mse(targets: ArrayView1<'_, f64>, predictions: ArrayView1<'_, f64>) -> f64 {
    let n = targets.len();
    if n == 0 {
        return 0.0;
    }
    targets
        .iter()
        .zip(predictions.iter())
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / n as f64
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-5;

/// Largest relative disagreement between backprop and central differences
/// over every parameter: `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check(net: &Network, input: &[f64], loss: &dyn Loss) -> Result<f64, NnError> {
    let output = net.forward(input)?;
    let analytic = net.backward(input, &loss.gradient(&output))?.to_flat();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let p = probe.param_mut(i).expect("index within parameter count");
        let original = *p;
        *p = original + GRADIENT_CHECK_STEP;
        let up = loss.value(&probe.forward(input)?);
        *probe.param_mut(i).unwrap() = original - GRADIENT_CHECK_STEP;
        let down = loss.value(&probe.forward(input)?);
        *probe.param_mut(i).unwrap() = original;
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_net() -> Network {
        let layers = vec![
            Layer {
                weights: Array2::zeros((4, 3)),
                biases: Array1::zeros(4),
                activation: Activation::Relu,
            },
            Layer {
                weights: Array2::zeros((2, 4)),
                biases: Array1::zeros(2),
                activation: Activation::Linear,
            },
        ];
        Network::from_layers(layers).unwrap()
    }

    fn identity_net(n: usize) -> Network {
        Network::from_layers(vec![Layer {
            weights: Array2::eye(n),
            biases: Array1::zeros(n),
            activation: Activation::Linear,
        }])
        .unwrap()
    }

    #[test]
    fn forward_cases() {
        assert_eq!(zero_net().forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(identity_net(3).forward(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::mlp(3, &[8, 8], 2, &mut rng).unwrap();
        let a = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let b = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            net.forward(&[1.0]),
            Err(NnError::DimensionMismatch { expected: 3, got: 1 })
        );
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Network::mlp(3, &[5], 2, &mut rng).unwrap();
        let xs = array![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]];
        let batch = net.forward_batch(xs.view()).unwrap();
        for (row, x) in xs.rows().into_iter().enumerate() {
            let single = net.forward(x.as_slice().unwrap()).unwrap();
            for j in 0..2 {
                assert!((batch[[row, j]] - single[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::mlp(3, &[4], 2, &mut rng).unwrap();
        let g = net.backward(&[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));

        let net = Network::from_layers(vec![Layer {
            weights: array![[0.5, -1.0, 2.0]],
            biases: array![0.0],
            activation: Activation::Linear,
        }])
        .unwrap();
        let x = [3.0, 4.0, 5.0];
        let g = net.backward(&x, &[1.0]).unwrap();
        assert_eq!(g.layers[0].0.row(0).to_vec(), x.to_vec());
        assert_eq!(g.layers[0].1[0], 1.0);
    }

    #[test]
    fn sgd_arithmetic() {
        let mut net = Network::from_layers(vec![Layer {
            weights: array![[1.0]],
            biases: array![0.0],
            activation: Activation::Linear,
        }])
        .unwrap();
        let grads = Gradients {
            layers: vec![(array![[2.0]], array![0.0])],
        };
        Optimizer::sgd(0.5).step(&mut net, &grads).unwrap();
        assert_eq!(net.layers()[0].weights[[0, 0]], 0.0);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::mlp(3, &[4], 2, &mut rng).unwrap();
        let before = net.clone();
        let zeros = Gradients::zeros_like(&net);
        let mut opt = Optimizer::adam(1e-2);
        for _ in 0..3 {
            opt.step(&mut net, &zeros).unwrap();
        }
        assert_eq!(net, before);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::mlp(3, &[4], 2, &mut rng).unwrap();
        let before = net.params_flat();
        let mut grads = Gradients::zeros_like(&net);
        for (i, (w, b)) in grads.layers.iter_mut().enumerate() {
            w.mapv_inplace(|_| 0.3 * (i as f64 + 1.0));
            b.mapv_inplace(|_| -7.0);
        }
        let lr = 1e-3;
        Optimizer::adam(lr).step(&mut net, &grads).unwrap();
        for (a, b) in before.iter().zip(net.params_flat()) {
            let rel = ((a - b).abs() - lr).abs() / lr;
            assert!(rel < 1e-6, "update off by {rel}");
        }
    }

    #[test]
    fn optimizer_rejects_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::mlp(3, &[4], 2, &mut rng).unwrap();
        let other = Network::mlp(3, &[5], 2, &mut rng).unwrap();
        let g = Gradients::zeros_like(&other);
        assert!(Optimizer::adam(1e-3).step(&mut net, &g).is_err());
    }

    #[test]
    fn gradient_check_cases() {
        let net = identity_net(3);
        let loss = SquaredError { target: vec![1.0, -1.0, 0.5] };
        assert!(gradient_check(&net, &[0.3, 0.2, -0.4], &loss).unwrap() < 1e-7);

        let loss = SquaredError { target: vec![0.0, 0.0] };
        assert_eq!(gradient_check(&zero_net(), &[0.0, 0.0, 0.0], &loss).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Network::mlp(4, &[6, 5], 3, &mut rng).unwrap();
        let loss = SquaredError { target: vec![0.2, -0.1, 0.4] };
        assert!(gradient_check(&net, &[0.5, -0.3, 0.8, 0.1], &loss).unwrap() < 1e-4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::mlp(6, &[7, 3], 2, &mut rng).unwrap();
        let back = Network::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        let mut ckpt = net.to_checkpoint();
        ckpt.format_version = 99;
        assert!(Network::from_checkpoint(&ckpt).is_err());
    }

    #[test]
    fn soft_update_mixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Network::mlp(2, &[3], 1, &mut rng).unwrap();
        let mut b = Network::mlp(2, &[3], 1, &mut rng).unwrap();
        let (pa, pb) = (a.params_flat(), b.params_flat());
        b.soft_update_from(&a, 0.5);
        for ((x, y), z) in pa.iter().zip(&pb).zip(b.params_flat()) {
            assert!((0.5 * x + 0.5 * y - z).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_matches_direct_sum() {
        let y = array![1.0, 2.0, 4.0];
        let p = array![1.5, 2.0, 3.0];
        assert!((mse(y.view(), p.view()) - (0.25 + 0.0 + 1.0) / 3.0).abs() < 1e-15);
    }
}
