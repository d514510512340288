//! Training: class-weighted softmax cross-entropy, the Adam optimizer, the
//! epoch loop, and checkpoint persistence.
//!
//! The loop carves a fixed validation slice from one seeded shuffle (the
//! last tenth by default), then re-shuffles the remaining rows every epoch
//! from the same random stream. Gradients flow through
//! [`Network::backward_from_logits`], so the softmax/cross-entropy pair is
//! differentiated in closed form. Checkpoints are JSON: architecture
//! configuration, every parameter tensor, batch-norm running statistics, and
//! the feature-transform sidecar, reloadable bit-for-bit.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::predict_classes;
use crate::ingest::N_CLASSES;
use crate::nn::{build_network, LayerKind, ModelConfig, Network, NnError, Param};
use crate::pipeline::{ClassWeights, FeatureFrame, TransformSidecar, N_FEATURES};
use crate::tensor::Tensor;

pub type TrainResult<T> = Result<T, TrainError>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("row {index} has label {label}, outside the {n_classes} classes")]
    BadLabel {
        index: usize,
        label: u8,
        n_classes: usize,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
}

// ============================================================================
// Loss
// ============================================================================

/// Class-weighted softmax cross-entropy.
///
/// `loss = -(1/W) * sum_i w(y_i) * ln(p_i[y_i])` with `W = sum_i w(y_i)`;
/// probabilities are clamped at 1e-12 before the logarithm. The returned
/// gradient is taken with respect to the logits:
/// `d/dz_i = w(y_i) * (p_i - onehot(y_i)) / W`.
pub fn weighted_sce_loss(
    probs: &Tensor,
    labels: &[u8],
    weights: &ClassWeights,
) -> TrainResult<(f64, Tensor)> {
    let (batch, k) = probs.dims2().map_err(NnError::from)?;
    if batch != labels.len() {
        return Err(TrainError::Config(format!(
            "{} probability rows but {} labels",
            batch,
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(TrainError::TooFewRows(0));
    }
    let mut weight_sum = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l as usize >= k {
            return Err(TrainError::BadLabel {
                index: i,
                label: l,
                n_classes: k,
            });
        }
        weight_sum += weights.get(l);
    }

    let mut loss = 0.0;
    let mut dlogits = vec![0.0; batch * k];
    for (i, &l) in labels.iter().enumerate() {
        let w = weights.get(l);
        let row = &probs.data()[i * k..(i + 1) * k];
        loss -= w * row[l as usize].max(1e-12).ln();
        for c in 0..k {
            let target = if c == l as usize { 1.0 } else { 0.0 };
            dlogits[i * k + c] = w * (row[c] - target) / weight_sum;
        }
    }
    Ok((
        loss / weight_sum,
        Tensor::from_vec(&[batch, k], dlogits).map_err(NnError::from)?,
    ))
}

// ============================================================================
// Optimizer
// ============================================================================

/// Adam with bias-corrected moment estimates and a global step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> TrainResult<Self> {
        if learning_rate.is_nan() || learning_rate <= 0.0 {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(TrainError::Config(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(TrainError::Config(format!("eps must be positive, got {eps}")));
        }
        Ok(Adam {
            learning_rate,
            beta1,
            beta2,
            eps,
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update over every parameter from its accumulated gradient.
    pub fn step(&mut self, net: &mut Network) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for layer in &mut net.layers {
            for p in layer.params_mut() {
                self.step_param(p, bc1, bc2);
            }
        }
    }

    fn step_param(&self, p: &mut Param, bc1: f64, bc2: f64) {
        let n = p.value.len();
        let grad = p.grad.data();
        let m = p.m.data_mut();
        for i in 0..n {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
        }
        let grad = p.grad.data();
        let v = p.v.data_mut();
        for i in 0..n {
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
        }
        let m = p.m.data();
        let v = p.v.data();
        let value = p.value.data_mut();
        // Split borrows via raw copy of slices is avoided: recompute below.
        let mut updates = vec![0.0; n];
        for i in 0..n {
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            updates[i] = self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        for (val, upd) in value.iter_mut().zip(updates) {
            *val -= upd;
        }
    }
}

// ============================================================================
// Training loop
// ============================================================================

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_split: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub class_weights: ClassWeights,
    /// Seeds the validation carve-out and the per-epoch shuffles.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 70,
            batch_size: 1024,
            validation_split: 0.1,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            class_weights: ClassWeights::default(),
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> TrainResult<()> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_split) {
            return Err(TrainError::Config(format!(
                "validation split must lie in [0, 1), got {}",
                self.validation_split
            )));
        }
        // Optimizer parameters are validated by Adam::new.
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainingHistory {
    /// Writes `history.csv` with one row per epoch.
    pub fn write_csv(&self, path: &Path) -> TrainResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => TrainError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => TrainError::Format(format!("csv error: {other:?}")),
        })?;
        w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            .map_err(|e| TrainError::Format(e.to_string()))?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.train_accuracy.to_string(),
                e.val_loss.to_string(),
                e.val_accuracy.to_string(),
            ])
            .map_err(|e| TrainError::Format(e.to_string()))?;
        }
        w.flush().map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainReport {
    pub history: TrainingHistory,
    pub optimizer_steps: u64,
    /// Row indices (into the frame given to [`train`]) held out for
    /// validation.
    pub val_indices: Vec<usize>,
}

/// Builds the `(batch, n_features, 1)` input tensor for a set of frame rows.
pub fn batch_tensor(frame: &FeatureFrame, indices: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(indices.len() * N_FEATURES);
    for &i in indices {
        data.extend_from_slice(&frame.rows[i]);
    }
    Tensor::from_vec(&[indices.len(), N_FEATURES, 1], data).unwrap()
}

fn mean_accuracy(pred: &[u8], labels: &[u8]) -> f64 {
    let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len() as f64
}

/// Trains `net` on `frame` and returns the per-epoch history.
///
/// Deterministic given (network initialization, frame, config): the
/// validation rows are the tail of one seeded shuffle, epoch shuffles
/// continue from the same stream, and the final partial batch is kept.
pub fn train(net: &mut Network, frame: &FeatureFrame, cfg: &TrainConfig) -> TrainResult<TrainReport> {
    cfg.validate()?;
    let n = frame.n_rows();
    if n < 2 {
        return Err(TrainError::TooFewRows(n));
    }
    for (i, &l) in frame.labels.iter().enumerate() {
        if l as usize >= N_CLASSES {
            return Err(TrainError::BadLabel {
                index: i,
                label: l,
                n_classes: N_CLASSES,
            });
        }
    }
    let mut optimizer = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let val_n = if cfg.validation_split == 0.0 {
        0
    } else {
        ((cfg.validation_split * n as f64).round() as usize).clamp(1, n - 1)
    };
    let val_indices = order.split_off(n - val_n);
    let mut pool = order;
    if pool.is_empty() {
        return Err(TrainError::Config(
            "validation split leaves no training rows".into(),
        ));
    }
    let val_input = if val_indices.is_empty() {
        None
    } else {
        let labels: Vec<u8> = val_indices.iter().map(|&i| frame.labels[i]).collect();
        Some((batch_tensor(frame, &val_indices), labels))
    };

    let mut history = TrainingHistory::default();
    for epoch in 1..=cfg.epochs {
        pool.shuffle(&mut rng);
        let mut loss_weighted_sum = 0.0;
        let mut weight_sum = 0.0;
        let mut correct = 0usize;

        for batch in pool.chunks(cfg.batch_size) {
            let x = batch_tensor(frame, batch);
            let labels: Vec<u8> = batch.iter().map(|&i| frame.labels[i]).collect();
            net.zero_grads();
            let probs = net.forward_train(&x)?;
            let (loss, dlogits) = weighted_sce_loss(&probs, &labels, &cfg.class_weights)?;
            net.backward_from_logits(&dlogits)?;
            optimizer.step(net);

            let batch_weight: f64 = labels.iter().map(|&l| cfg.class_weights.get(l)).sum();
            loss_weighted_sum += loss * batch_weight;
            weight_sum += batch_weight;
            let pred = predict_classes(&probs)?;
            correct += pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
        }

        let train_loss = loss_weighted_sum / weight_sum;
        let train_accuracy = correct as f64 / pool.len() as f64;
        let (val_loss, val_accuracy) = match &val_input {
            Some((x, labels)) => {
                let probs = net.infer(x)?;
                let (loss, _) = weighted_sce_loss(&probs, labels, &cfg.class_weights)?;
                let pred = predict_classes(&probs)?;
                (loss, mean_accuracy(&pred, labels))
            }
            None => (f64::NAN, f64::NAN),
        };
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.4} acc {train_accuracy:.4}, val loss {val_loss:.4} acc {val_accuracy:.4}",
            cfg.epochs
        );
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    Ok(TrainReport {
        history,
        optimizer_steps: optimizer.steps(),
        val_indices,
    })
}

// ============================================================================
// Checkpoints
// ============================================================================

pub const CHECKPOINT_FORMAT: &str = "vle-forecast-checkpoint-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorData {
    fn of(t: &Tensor) -> Self {
        TensorData {
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }

    fn restore(&self, into: &mut Param, what: &str) -> TrainResult<()> {
        if self.shape != into.value.shape() {
            return Err(TrainError::Format(format!(
                "{what}: checkpoint shape {:?} does not match model shape {:?}",
                self.shape,
                into.value.shape()
            )));
        }
        into.value.data_mut().copy_from_slice(&self.data);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSnapshot {
    Conv1d {
        kernel: usize,
        c_in: usize,
        c_out: usize,
        relu: bool,
        weight: TensorData,
        bias: TensorData,
    },
    MaxPool1d {
        size: usize,
        stride: usize,
    },
    BatchNorm1d {
        channels: usize,
        eps: f64,
        momentum: f64,
        gamma: TensorData,
        beta: TensorData,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Flatten,
    Dense {
        f_in: usize,
        f_out: usize,
        relu: bool,
        weight: TensorData,
        bias: TensorData,
    },
    Dropout {
        rate: f64,
    },
    Softmax,
}

fn snapshot_layer(layer: &LayerKind) -> LayerSnapshot {
    match layer {
        LayerKind::Conv1d(l) => LayerSnapshot::Conv1d {
            kernel: l.kernel,
            c_in: l.c_in,
            c_out: l.c_out,
            relu: l.relu,
            weight: TensorData::of(&l.weight.value),
            bias: TensorData::of(&l.bias.value),
        },
        LayerKind::MaxPool1d(l) => LayerSnapshot::MaxPool1d {
            size: l.size,
            stride: l.stride,
        },
        LayerKind::BatchNorm1d(l) => LayerSnapshot::BatchNorm1d {
            channels: l.channels,
            eps: l.eps,
            momentum: l.momentum,
            gamma: TensorData::of(&l.gamma.value),
            beta: TensorData::of(&l.beta.value),
            running_mean: l.running_mean.clone(),
            running_var: l.running_var.clone(),
        },
        LayerKind::Flatten(_) => LayerSnapshot::Flatten,
        LayerKind::Dense(l) => LayerSnapshot::Dense {
            f_in: l.f_in,
            f_out: l.f_out,
            relu: l.relu,
            weight: TensorData::of(&l.weight.value),
            bias: TensorData::of(&l.bias.value),
        },
        LayerKind::Dropout(l) => LayerSnapshot::Dropout { rate: l.rate },
        LayerKind::Softmax(_) => LayerSnapshot::Softmax,
    }
}

fn restore_layer(layer: &mut LayerKind, snap: &LayerSnapshot, index: usize) -> TrainResult<()> {
    let mismatch = |snap: &LayerSnapshot, layer: &LayerKind| {
        TrainError::Format(format!(
            "layer {index}: checkpoint has {snap:?} but the model has {}",
            layer.name()
        ))
    };
    match (layer, snap) {
        (
            LayerKind::Conv1d(l),
            LayerSnapshot::Conv1d {
                kernel,
                c_in,
                c_out,
                relu,
                weight,
                bias,
            },
        ) => {
            if (l.kernel, l.c_in, l.c_out, l.relu) != (*kernel, *c_in, *c_out, *relu) {
                return Err(TrainError::Format(format!(
                    "layer {index}: convolution geometry mismatch"
                )));
            }
            weight.restore(&mut l.weight, "conv weight")?;
            bias.restore(&mut l.bias, "conv bias")?;
        }
        (LayerKind::MaxPool1d(l), LayerSnapshot::MaxPool1d { size, stride }) => {
            if (l.size, l.stride) != (*size, *stride) {
                return Err(TrainError::Format(format!(
                    "layer {index}: pooling geometry mismatch"
                )));
            }
        }
        (
            LayerKind::BatchNorm1d(l),
            LayerSnapshot::BatchNorm1d {
                channels,
                eps,
                momentum,
                gamma,
                beta,
                running_mean,
                running_var,
            },
        ) => {
            if l.channels != *channels {
                return Err(TrainError::Format(format!(
                    "layer {index}: batch-norm channel mismatch"
                )));
            }
            l.eps = *eps;
            l.momentum = *momentum;
            gamma.restore(&mut l.gamma, "batch-norm gamma")?;
            beta.restore(&mut l.beta, "batch-norm beta")?;
            if running_mean.len() != *channels || running_var.len() != *channels {
                return Err(TrainError::Format(format!(
                    "layer {index}: batch-norm running statistics mismatch"
                )));
            }
            l.running_mean = running_mean.clone();
            l.running_var = running_var.clone();
        }
        (LayerKind::Flatten(_), LayerSnapshot::Flatten) => {}
        (
            LayerKind::Dense(l),
            LayerSnapshot::Dense {
                f_in,
                f_out,
                relu,
                weight,
                bias,
            },
        ) => {
            if (l.f_in, l.f_out, l.relu) != (*f_in, *f_out, *relu) {
                return Err(TrainError::Format(format!(
                    "layer {index}: dense geometry mismatch"
                )));
            }
            weight.restore(&mut l.weight, "dense weight")?;
            bias.restore(&mut l.bias, "dense bias")?;
        }
        (LayerKind::Dropout(l), LayerSnapshot::Dropout { rate }) => {
            if l.rate != *rate {
                return Err(TrainError::Format(format!(
                    "layer {index}: dropout rate mismatch"
                )));
            }
        }
        (LayerKind::Softmax(_), LayerSnapshot::Softmax) => {}
        (layer, snap) => return Err(mismatch(snap, layer)),
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    model: ModelConfig,
    layers: Vec<LayerSnapshot>,
    sidecar: TransformSidecar,
}

/// Writes the model weights, running statistics, and the feature-transform
/// sidecar as one JSON file.
pub fn save_checkpoint(net: &Network, sidecar: &TransformSidecar, path: &Path) -> TrainResult<()> {
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        model: net.config.clone(),
        layers: net.layers.iter().map(snapshot_layer).collect(),
        sidecar: sidecar.clone(),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| TrainError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let file = std::fs::File::create(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::to_writer(std::io::BufWriter::new(file), &checkpoint)?;
    Ok(())
}

/// Rebuilds a network and its transform sidecar from a checkpoint.
///
/// The architecture is rebuilt from the embedded configuration, then every
/// parameter and running statistic is overwritten from the snapshot, so the
/// reload reproduces the saved model exactly.
pub fn load_checkpoint(path: &Path) -> TrainResult<(Network, TransformSidecar)> {
    let file = std::fs::File::open(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let checkpoint: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
    if checkpoint.format != CHECKPOINT_FORMAT {
        return Err(TrainError::Format(format!(
            "unsupported checkpoint format {:?}",
            checkpoint.format
        )));
    }
    let mut net = build_network(&checkpoint.model)?;
    if net.layers.len() != checkpoint.layers.len() {
        return Err(TrainError::Format(format!(
            "checkpoint has {} layers but the rebuilt model has {}",
            checkpoint.layers.len(),
            net.layers.len()
        )));
    }
    for (i, (layer, snap)) in net.layers.iter_mut().zip(&checkpoint.layers).enumerate() {
        restore_layer(layer, snap, i)?;
    }
    Ok((net, checkpoint.sidecar))
}

/// [`load_checkpoint`] plus a guard that the stored architecture matches.
pub fn load_checkpoint_expecting(
    path: &Path,
    arch: crate::nn::Arch,
) -> TrainResult<(Network, TransformSidecar)> {
    let (net, sidecar) = load_checkpoint(path)?;
    if net.config.arch != arch {
        return Err(TrainError::Format(format!(
            "checkpoint holds a {} model, expected {}",
            net.config.arch.as_str(),
            arch.as_str()
        )));
    }
    Ok((net, sidecar))
}
