//! From-scratch neural networks: a 1-D convolutional classifier and a
//! multilayer-perceptron baseline, with explicit backpropagation.
//!
//! Both architectures consume a `(batch, n_features, 1)` tensor and emit
//! class probabilities. [`Network::forward_train`] runs with training
//! semantics (batch statistics, active dropout) and caches what the backward
//! pass needs; [`Network::infer`] is pure and uses evaluation semantics.
//! Parameters carry their own gradient and optimizer-moment buffers so an
//! optimizer can walk [`Network::param_mut`] without further bookkeeping.

pub mod layers;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{ShapeError, Tensor};

pub use layers::{BatchNorm1d, Conv1d, Dense, Dropout, Flatten, LayerKind, MaxPool1d, Softmax};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{0}")]
    State(String),
}

/// A trainable tensor bundled with its gradient and Adam moment estimates.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Param {
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
        }
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = 0.0;
        }
    }
}

// ============================================================================
// Configuration
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// Six 1-D convolutions with pooling and batch norm, then a dense head.
    PaperCnn,
    /// Dense-only baseline of the same head depth.
    MlpBaseline,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::PaperCnn => "paper_cnn",
            Arch::MlpBaseline => "mlp_baseline",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper_cnn" => Ok(Arch::PaperCnn),
            "mlp_baseline" => Ok(Arch::MlpBaseline),
            other => Err(format!(
                "unknown architecture {other:?} (expected paper_cnn or mlp_baseline)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub n_features: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(arch: Arch, init_seed: u64) -> Self {
        ModelConfig {
            arch,
            n_features: crate::pipeline::N_FEATURES,
            n_classes: crate::ingest::N_CLASSES,
            dropout_rate: 0.3,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            init_seed,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.n_classes < 2 {
            return Err(NnError::Config(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.arch == Arch::PaperCnn && self.n_features < 4 {
            return Err(NnError::Config(format!(
                "the convolutional stack pools twice and needs at least 4 features, got {}",
                self.n_features
            )));
        }
        if self.n_features == 0 {
            return Err(NnError::Config("need at least 1 feature".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.bn_eps.is_nan() || self.bn_eps <= 0.0 {
            return Err(NnError::Config("batch-norm epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(NnError::Config(format!(
                "batch-norm momentum must lie in [0, 1), got {}",
                self.bn_momentum
            )));
        }
        Ok(())
    }
}

// ============================================================================
// Network
// ============================================================================

#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub layers: Vec<LayerKind>,
}

impl Network {
    /// Training-mode forward pass; caches intermediates for [`Self::backward_from_logits`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward_train(&cur)?;
        }
        Ok(cur)
    }

    /// Evaluation-mode forward pass; pure.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    /// Backpropagates a gradient with respect to the pre-softmax logits.
    ///
    /// The cross-entropy gradient is naturally expressed at the logits, so
    /// the trailing softmax layer is skipped. Parameter gradients accumulate;
    /// call [`Self::zero_grads`] between batches.
    pub fn backward_from_logits(&mut self, dlogits: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = dlogits.clone();
        let skip_last = matches!(self.layers.last(), Some(LayerKind::Softmax(_)));
        let n = self.layers.len();
        let upto = if skip_last { n - 1 } else { n };
        for layer in self.layers[..upto].iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    /// Backpropagates through every layer, softmax included.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                p.zero_grad();
            }
        }
    }

    /// Number of parameter tensors.
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.params().len()).sum()
    }

    /// Total number of trainable scalars.
    pub fn n_scalars(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|p| p.value.len())
            .sum()
    }

    pub fn param(&self, index: usize) -> &Param {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .nth(index)
            .expect("parameter index in range")
    }

    pub fn param_mut(&mut self, index: usize) -> &mut Param {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .nth(index)
            .expect("parameter index in range")
    }

    /// Stable names parallel to the parameter indices, e.g.
    /// `layer0.conv1d_3x1to16.weight`.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for n in layer.param_names() {
                names.push(format!("layer{i}.{n}"));
            }
        }
        names
    }

    /// Pins every dropout mask so repeated training passes are deterministic.
    pub fn freeze_dropout(&mut self) {
        for layer in &mut self.layers {
            if let LayerKind::Dropout(d) = layer {
                d.set_frozen(true);
            }
        }
    }

    pub fn unfreeze_dropout(&mut self) {
        for layer in &mut self.layers {
            if let LayerKind::Dropout(d) = layer {
                d.set_frozen(false);
            }
        }
    }
}

// ============================================================================
// Builder
// ============================================================================

fn he_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Param {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Param::new(Tensor::from_vec(shape, data).unwrap())
}

fn glorot_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Param {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Param::new(Tensor::from_vec(shape, data).unwrap())
}

fn conv(rng: &mut ChaCha8Rng, kernel: usize, c_in: usize, c_out: usize) -> LayerKind {
    let weight = he_uniform(rng, &[kernel * c_in, c_out], kernel * c_in);
    LayerKind::Conv1d(Conv1d::new(kernel, c_in, c_out, true, weight))
}

fn dense_relu(rng: &mut ChaCha8Rng, f_in: usize, f_out: usize) -> LayerKind {
    let weight = he_uniform(rng, &[f_in, f_out], f_in);
    LayerKind::Dense(Dense::new(f_in, f_out, true, weight))
}

fn dense_out(rng: &mut ChaCha8Rng, f_in: usize, f_out: usize) -> LayerKind {
    let weight = glorot_uniform(rng, &[f_in, f_out], f_in, f_out);
    LayerKind::Dense(Dense::new(f_in, f_out, false, weight))
}

/// Builds a freshly initialized network.
///
/// Hidden weights use He-uniform draws, the output layer Glorot-uniform,
/// biases start at zero, batch-norm at identity. All draws come from one
/// stream seeded with `init_seed`, consumed in layer order; the dropout
/// stream is seeded from `init_seed` xor a fixed constant so mask sampling
/// does not disturb initialization.
pub fn build_network(config: &ModelConfig) -> Result<Network, NnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let dropout_rng = ChaCha8Rng::seed_from_u64(config.init_seed ^ 0x9E37_79B9_7F4A_7C15);
    let f = config.n_features;
    let k = config.n_classes;

    let layers = match config.arch {
        Arch::PaperCnn => {
            let l_mid = f / 2;
            let l_final = l_mid / 2;
            let flat = l_final * 16;
            vec![
                conv(&mut rng, 3, 1, 16),
                LayerKind::MaxPool1d(MaxPool1d::new(2, 2)),
                conv(&mut rng, 3, 16, 32),
                conv(&mut rng, 3, 32, 64),
                conv(&mut rng, 3, 64, 128),
                LayerKind::MaxPool1d(MaxPool1d::new(2, 2)),
                conv(&mut rng, 3, 128, 32),
                conv(&mut rng, 3, 32, 16),
                LayerKind::BatchNorm1d(BatchNorm1d::new(16, config.bn_eps, config.bn_momentum)),
                LayerKind::Flatten(Flatten::new()),
                dense_relu(&mut rng, flat, 128),
                dense_relu(&mut rng, 128, 64),
                dense_relu(&mut rng, 64, 32),
                dense_relu(&mut rng, 32, 16),
                LayerKind::Dropout(Dropout::new(config.dropout_rate, dropout_rng)),
                dense_out(&mut rng, 16, k),
                LayerKind::Softmax(Softmax::new()),
            ]
        }
        Arch::MlpBaseline => vec![
            LayerKind::Flatten(Flatten::new()),
            dense_relu(&mut rng, f, 128),
            dense_relu(&mut rng, 128, 64),
            dense_relu(&mut rng, 64, 32),
            LayerKind::Dropout(Dropout::new(config.dropout_rate, dropout_rng)),
            dense_out(&mut rng, 32, k),
            LayerKind::Softmax(Softmax::new()),
        ],
    };
    Ok(Network {
        config: config.clone(),
        layers,
    })
}

// ============================================================================
// Numeric differentiation support
// ============================================================================

/// Symmetric relative error between a numeric and an analytic derivative.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Central-difference derivative of `loss` with respect to one parameter
/// element. The parameter is restored afterwards.
pub fn central_difference<F>(
    net: &mut Network,
    param: usize,
    elem: usize,
    h: f64,
    mut loss: F,
) -> f64
where
    F: FnMut(&mut Network) -> f64,
{
    let orig = net.param(param).value.data()[elem];
    net.param_mut(param).value.data_mut()[elem] = orig + h;
    let lp = loss(net);
    net.param_mut(param).value.data_mut()[elem] = orig - h;
    let lm = loss(net);
    net.param_mut(param).value.data_mut()[elem] = orig;
    (lp - lm) / (2.0 * h)
}
