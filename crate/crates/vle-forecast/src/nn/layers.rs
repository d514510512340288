//! Layer implementations with explicit forward and backward passes.
//!
//! Every layer offers three entry points: a pure [`infer`](LayerKind::infer)
//! pass (evaluation semantics: dropout is the identity, batch norm uses its
//! running statistics), a caching [`forward_train`](LayerKind::forward_train)
//! pass, and a [`backward`](LayerKind::backward) pass that consumes the cache,
//! accumulates parameter gradients, and returns the gradient with respect to
//! the layer input. Gradients accumulate across calls until
//! [`Param::zero_grad`] resets them.
//!
//! Rank-3 activations use the layout `(batch, length, channels)` with
//! channels fastest, so flattening is a pure reshape.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{matmul, matmul_acc, transpose, Tensor};

use super::{NnError, Param};

// ============================================================================
// Conv1d
// ============================================================================

/// 1-D convolution, stride 1, zero ("same") padding, optional fused ReLU.
///
/// The weight is stored as a `(kernel * c_in, c_out)` matrix so the forward
/// pass is one im2col expansion followed by one matrix product.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Param,
    pub bias: Param,
    pub relu: bool,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    x_col: Vec<f64>,
    batch: usize,
    length: usize,
    /// ReLU derivative at the pre-activation (all ones when relu is off).
    act_grad: Vec<f64>,
}

impl Conv1d {
    pub fn new(kernel: usize, c_in: usize, c_out: usize, relu: bool, weight: Param) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        Conv1d {
            kernel,
            c_in,
            c_out,
            weight,
            bias: Param::new(Tensor::zeros(&[c_out])),
            relu,
            cache: None,
        }
    }

    fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// im2col: row (b*L + l) holds the kernel window centered at position l.
    fn expand(&self, x: &Tensor) -> Result<(Vec<f64>, usize, usize), NnError> {
        let (batch, length, c_in) = x.dims3()?;
        if c_in != self.c_in {
            return Err(NnError::State(format!(
                "conv1d expected {} input channels, got {c_in}",
                self.c_in
            )));
        }
        let pad = self.pad();
        let kc = self.kernel * c_in;
        let mut x_col = vec![0.0; batch * length * kc];
        let xd = x.data();
        for b in 0..batch {
            for l in 0..length {
                let row = (b * length + l) * kc;
                for k in 0..self.kernel {
                    let src = l as isize + k as isize - pad as isize;
                    if src < 0 || src >= length as isize {
                        continue;
                    }
                    let src_off = (b * length + src as usize) * c_in;
                    let dst_off = row + k * c_in;
                    x_col[dst_off..dst_off + c_in]
                        .copy_from_slice(&xd[src_off..src_off + c_in]);
                }
            }
        }
        Ok((x_col, batch, length))
    }

    fn apply(&self, x_col: &[f64], batch: usize, length: usize) -> (Vec<f64>, Vec<f64>) {
        let rows = batch * length;
        let kc = self.kernel * self.c_in;
        let mut z = matmul(rows, kc, self.c_out, x_col, self.weight.value.data());
        let bias = self.bias.value.data();
        for r in 0..rows {
            for (zv, bv) in z[r * self.c_out..(r + 1) * self.c_out].iter_mut().zip(bias) {
                *zv += bv;
            }
        }
        let mut act_grad = vec![1.0; z.len()];
        if self.relu {
            for (zv, g) in z.iter_mut().zip(act_grad.iter_mut()) {
                if *zv <= 0.0 {
                    *zv = 0.0;
                    *g = 0.0;
                }
            }
        }
        (z, act_grad)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (x_col, batch, length) = self.expand(x)?;
        let (y, _) = self.apply(&x_col, batch, length);
        Ok(Tensor::from_vec(&[batch, length, self.c_out], y)?)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let (x_col, batch, length) = self.expand(x)?;
        let (y, act_grad) = self.apply(&x_col, batch, length);
        self.cache = Some(ConvCache {
            x_col,
            batch,
            length,
            act_grad,
        });
        Ok(Tensor::from_vec(&[batch, length, self.c_out], y)?)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("conv1d backward without forward".into()))?;
        let (batch, length) = (cache.batch, cache.length);
        let rows = batch * length;
        let kc = self.kernel * self.c_in;
        if dy.shape() != [batch, length, self.c_out] {
            return Err(NnError::State(format!(
                "conv1d backward expected gradient shape [{batch}, {length}, {}], got {:?}",
                self.c_out,
                dy.shape()
            )));
        }

        let mut dz = dy.data().to_vec();
        for (g, &a) in dz.iter_mut().zip(cache.act_grad.iter()) {
            *g *= a;
        }

        let db = self.bias.grad.data_mut();
        for r in 0..rows {
            for (gb, &gz) in db.iter_mut().zip(&dz[r * self.c_out..(r + 1) * self.c_out]) {
                *gb += gz;
            }
        }
        let x_col_t = transpose(rows, kc, &cache.x_col);
        matmul_acc(kc, rows, self.c_out, &x_col_t, &dz, self.weight.grad.data_mut());

        let w_t = transpose(kc, self.c_out, self.weight.value.data());
        let dx_col = matmul(rows, self.c_out, kc, &dz, &w_t);

        // col2im: scatter the window gradients back onto the input positions.
        let pad = self.pad();
        let mut dx = vec![0.0; batch * length * self.c_in];
        for b in 0..batch {
            for l in 0..length {
                let row = (b * length + l) * kc;
                for k in 0..self.kernel {
                    let src = l as isize + k as isize - pad as isize;
                    if src < 0 || src >= length as isize {
                        continue;
                    }
                    let dst_off = (b * length + src as usize) * self.c_in;
                    let src_off = row + k * self.c_in;
                    for c in 0..self.c_in {
                        dx[dst_off + c] += dx_col[src_off + c];
                    }
                }
            }
        }
        Ok(Tensor::from_vec(&[batch, length, self.c_in], dx)?)
    }
}

// ============================================================================
// MaxPool1d
// ============================================================================

/// Max pooling along the length axis; a tail shorter than the window is
/// dropped. Ties resolve to the earliest position.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub size: usize,
    pub stride: usize,
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    /// Flat index into the input buffer of each output's source element.
    argmax: Vec<usize>,
    in_shape: [usize; 3],
}

/// Pooled output values, their argmax indices, and the input shape.
type PooledValues = (Vec<f64>, Vec<usize>, [usize; 3]);

impl MaxPool1d {
    pub fn new(size: usize, stride: usize) -> Self {
        assert!(size > 0 && stride > 0);
        MaxPool1d {
            size,
            stride,
            cache: None,
        }
    }

    pub fn out_length(&self, length: usize) -> Result<usize, NnError> {
        if length < self.size {
            return Err(NnError::State(format!(
                "maxpool window {} does not fit length {length}",
                self.size
            )));
        }
        Ok((length - self.size) / self.stride + 1)
    }

    fn compute(&self, x: &Tensor) -> Result<PooledValues, NnError> {
        let (batch, length, channels) = x.dims3()?;
        let l_out = self.out_length(length)?;
        let xd = x.data();
        let mut y = vec![0.0; batch * l_out * channels];
        let mut argmax = vec![0usize; y.len()];
        for b in 0..batch {
            for lo in 0..l_out {
                for c in 0..channels {
                    let mut best_idx = (b * length + lo * self.stride) * channels + c;
                    let mut best = xd[best_idx];
                    for w in 1..self.size {
                        let idx = (b * length + lo * self.stride + w) * channels + c;
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                    let out = (b * l_out + lo) * channels + c;
                    y[out] = best;
                    argmax[out] = best_idx;
                }
            }
        }
        Ok((y, argmax, [batch, length, channels]))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (y, _, [batch, length, channels]) = self.compute(x)?;
        let l_out = self.out_length(length)?;
        Ok(Tensor::from_vec(&[batch, l_out, channels], y)?)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let (y, argmax, in_shape) = self.compute(x)?;
        let l_out = self.out_length(in_shape[1])?;
        let out = Tensor::from_vec(&[in_shape[0], l_out, in_shape[2]], y)?;
        self.cache = Some(PoolCache { argmax, in_shape });
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("maxpool backward without forward".into()))?;
        if dy.len() != cache.argmax.len() {
            return Err(NnError::State(format!(
                "maxpool backward expected {} gradient elements, got {}",
                cache.argmax.len(),
                dy.len()
            )));
        }
        let mut dx = vec![0.0; cache.in_shape.iter().product()];
        for (&src, &g) in cache.argmax.iter().zip(dy.data()) {
            dx[src] += g;
        }
        Ok(Tensor::from_vec(&cache.in_shape, dx)?)
    }
}

// ============================================================================
// BatchNorm1d
// ============================================================================

/// Per-channel batch normalization over the batch and length axes.
///
/// Training normalizes with biased batch moments and updates the running
/// statistics as `running = momentum * running + (1 - momentum) * batch`;
/// inference normalizes with the running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    in_shape: [usize; 3],
}

impl BatchNorm1d {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm1d {
            channels,
            gamma: Param::new(Tensor::from_vec(&[channels], vec![1.0; channels]).unwrap()),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps,
            momentum,
            cache: None,
        }
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize, usize), NnError> {
        let dims = x.dims3()?;
        if dims.2 != self.channels {
            return Err(NnError::State(format!(
                "batchnorm expected {} channels, got {}",
                self.channels, dims.2
            )));
        }
        Ok(dims)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (batch, length, channels) = self.check(x)?;
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut y = x.data().to_vec();
        for c in 0..channels {
            let scale = gamma[c] / (self.running_var[c] + self.eps).sqrt();
            let shift = beta[c] - self.running_mean[c] * scale;
            let mut i = c;
            while i < batch * length * channels {
                y[i] = y[i] * scale + shift;
                i += channels;
            }
        }
        Ok(Tensor::from_vec(&[batch, length, channels], y)?)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let (batch, length, channels) = self.check(x)?;
        let n = (batch * length) as f64;
        if batch * length == 0 {
            return Err(NnError::State("batchnorm on an empty batch".into()));
        }
        let xd = x.data();

        let mut mean = vec![0.0; channels];
        for row in xd.chunks_exact(channels) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; channels];
        for row in xd.chunks_exact(channels) {
            for c in 0..channels {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        for v in &mut var {
            *v /= n;
        }

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = vec![0.0; xd.len()];
        for (i, &v) in xd.iter().enumerate() {
            let c = i % channels;
            x_hat[i] = (v - mean[c]) * inv_std[c];
        }
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let y: Vec<f64> = x_hat
            .iter()
            .enumerate()
            .map(|(i, &h)| gamma[i % channels] * h + beta[i % channels])
            .collect();

        for c in 0..channels {
            self.running_mean[c] = self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean[c];
            self.running_var[c] = self.momentum * self.running_var[c] + (1.0 - self.momentum) * var[c];
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            in_shape: [batch, length, channels],
        });
        Ok(Tensor::from_vec(&[batch, length, channels], y)?)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("batchnorm backward without forward".into()))?;
        let [batch, length, channels] = cache.in_shape;
        let n = (batch * length) as f64;
        if dy.len() != cache.x_hat.len() {
            return Err(NnError::State("batchnorm gradient shape mismatch".into()));
        }
        let dyd = dy.data();

        let mut sum_dy = vec![0.0; channels];
        let mut sum_dy_xhat = vec![0.0; channels];
        for (i, &g) in dyd.iter().enumerate() {
            let c = i % channels;
            sum_dy[c] += g;
            sum_dy_xhat[c] += g * cache.x_hat[i];
        }
        for c in 0..channels {
            self.beta.grad.data_mut()[c] += sum_dy[c];
            self.gamma.grad.data_mut()[c] += sum_dy_xhat[c];
        }

        let gamma = self.gamma.value.data();
        let mut dx = vec![0.0; dyd.len()];
        for (i, &g) in dyd.iter().enumerate() {
            let c = i % channels;
            dx[i] = gamma[c] * cache.inv_std[c]
                * (g - sum_dy[c] / n - cache.x_hat[i] * sum_dy_xhat[c] / n);
        }
        Ok(Tensor::from_vec(&[batch, length, channels], dx)?)
    }
}

// ============================================================================
// Flatten
// ============================================================================

/// Collapses every axis after the batch axis; a pure reshape.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten::default()
    }

    fn flat(&self, x: &Tensor) -> Result<Tensor, NnError> {
        if x.rank() < 2 {
            return Err(NnError::State(format!(
                "flatten needs a batch axis, got rank {}",
                x.rank()
            )));
        }
        let batch = x.shape()[0];
        let rest: usize = x.shape()[1..].iter().product();
        Ok(x.clone().reshaped(&[batch, rest])?)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.flat(x)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        self.in_shape = Some(x.shape().to_vec());
        self.flat(x)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let shape = self
            .in_shape
            .take()
            .ok_or_else(|| NnError::State("flatten backward without forward".into()))?;
        Ok(dy.clone().reshaped(&shape)?)
    }
}

// ============================================================================
// Dense
// ============================================================================

/// Fully connected layer with optional fused ReLU.
#[derive(Debug, Clone)]
pub struct Dense {
    pub f_in: usize,
    pub f_out: usize,
    /// `(f_in, f_out)` matrix.
    pub weight: Param,
    pub bias: Param,
    pub relu: bool,
    cache: Option<DenseCache>,
}

#[derive(Debug, Clone)]
struct DenseCache {
    x: Vec<f64>,
    batch: usize,
    act_grad: Vec<f64>,
}

impl Dense {
    pub fn new(f_in: usize, f_out: usize, relu: bool, weight: Param) -> Self {
        Dense {
            f_in,
            f_out,
            weight,
            bias: Param::new(Tensor::zeros(&[f_out])),
            relu,
            cache: None,
        }
    }

    fn apply(&self, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>, usize), NnError> {
        let (batch, f_in) = x.dims2()?;
        if f_in != self.f_in {
            return Err(NnError::State(format!(
                "dense expected {} inputs, got {f_in}",
                self.f_in
            )));
        }
        let mut z = matmul(batch, f_in, self.f_out, x.data(), self.weight.value.data());
        let bias = self.bias.value.data();
        for r in 0..batch {
            for (zv, bv) in z[r * self.f_out..(r + 1) * self.f_out].iter_mut().zip(bias) {
                *zv += bv;
            }
        }
        let mut act_grad = vec![1.0; z.len()];
        if self.relu {
            for (zv, g) in z.iter_mut().zip(act_grad.iter_mut()) {
                if *zv <= 0.0 {
                    *zv = 0.0;
                    *g = 0.0;
                }
            }
        }
        Ok((z, act_grad, batch))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (y, _, batch) = self.apply(x)?;
        Ok(Tensor::from_vec(&[batch, self.f_out], y)?)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let (y, act_grad, batch) = self.apply(x)?;
        self.cache = Some(DenseCache {
            x: x.data().to_vec(),
            batch,
            act_grad,
        });
        Ok(Tensor::from_vec(&[batch, self.f_out], y)?)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::State("dense backward without forward".into()))?;
        let batch = cache.batch;
        if dy.shape() != [batch, self.f_out] {
            return Err(NnError::State(format!(
                "dense backward expected gradient shape [{batch}, {}], got {:?}",
                self.f_out,
                dy.shape()
            )));
        }
        let mut dz = dy.data().to_vec();
        for (g, &a) in dz.iter_mut().zip(cache.act_grad.iter()) {
            *g *= a;
        }
        let db = self.bias.grad.data_mut();
        for r in 0..batch {
            for (gb, &gz) in db.iter_mut().zip(&dz[r * self.f_out..(r + 1) * self.f_out]) {
                *gb += gz;
            }
        }
        let x_t = transpose(batch, self.f_in, &cache.x);
        matmul_acc(self.f_in, batch, self.f_out, &x_t, &dz, self.weight.grad.data_mut());
        let w_t = transpose(self.f_in, self.f_out, self.weight.value.data());
        let dx = matmul(batch, self.f_out, self.f_in, &dz, &w_t);
        Ok(Tensor::from_vec(&[batch, self.f_in], dx)?)
    }
}

// ============================================================================
// Dropout
// ============================================================================

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)` during
/// training so inference is the identity.
///
/// Freezing keeps the last sampled mask for subsequent training passes,
/// which makes the training loss a deterministic function of the parameters
/// (numeric differentiation relies on this).
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
    frozen: bool,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        assert!((0.0..1.0).contains(&rate));
        Dropout {
            rate,
            rng,
            frozen: false,
            mask: None,
        }
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
        if !frozen {
            self.mask = None;
        }
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        Ok(x.clone())
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let reuse = self.frozen && self.mask.as_ref().map(|m| m.len() == x.len()).unwrap_or(false);
        if !reuse {
            let keep = 1.0 - self.rate;
            let scale = 1.0 / keep;
            let mask: Vec<f64> = (0..x.len())
                .map(|_| if self.rng.gen::<f64>() < keep { scale } else { 0.0 })
                .collect();
            self.mask = Some(mask);
        }
        let mask = self.mask.as_ref().unwrap();
        let y: Vec<f64> = x.data().iter().zip(mask).map(|(&v, &m)| v * m).collect();
        Ok(Tensor::from_vec(x.shape(), y)?)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| NnError::State("dropout backward without forward".into()))?;
        if mask.len() != dy.len() {
            return Err(NnError::State("dropout gradient shape mismatch".into()));
        }
        let dx: Vec<f64> = dy.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
        let out = Tensor::from_vec(dy.shape(), dx)?;
        if !self.frozen {
            self.mask = None;
        }
        Ok(out)
    }
}

// ============================================================================
// Softmax
// ============================================================================

/// Row-wise softmax with max-shift stabilization.
#[derive(Debug, Clone, Default)]
pub struct Softmax {
    probs: Option<Tensor>,
}

impl Softmax {
    pub fn new() -> Self {
        Softmax::default()
    }

    fn compute(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (batch, k) = x.dims2()?;
        let mut y = x.data().to_vec();
        for r in 0..batch {
            let row = &mut y[r * k..(r + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(Tensor::from_vec(&[batch, k], y)?)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.compute(x)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let y = self.compute(x)?;
        self.probs = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        let probs = self
            .probs
            .take()
            .ok_or_else(|| NnError::State("softmax backward without forward".into()))?;
        let (batch, k) = probs.dims2()?;
        if dy.shape() != [batch, k] {
            return Err(NnError::State("softmax gradient shape mismatch".into()));
        }
        let p = probs.data();
        let g = dy.data();
        let mut dx = vec![0.0; p.len()];
        for r in 0..batch {
            let off = r * k;
            let dot: f64 = (0..k).map(|i| g[off + i] * p[off + i]).sum();
            for i in 0..k {
                dx[off + i] = p[off + i] * (g[off + i] - dot);
            }
        }
        Ok(Tensor::from_vec(&[batch, k], dx)?)
    }
}

// ============================================================================
// Dispatch
// ============================================================================

#[derive(Debug, Clone)]
pub enum LayerKind {
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
    BatchNorm1d(BatchNorm1d),
    Flatten(Flatten),
    Dense(Dense),
    Dropout(Dropout),
    Softmax(Softmax),
}

impl LayerKind {
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        match self {
            LayerKind::Conv1d(l) => l.infer(x),
            LayerKind::MaxPool1d(l) => l.infer(x),
            LayerKind::BatchNorm1d(l) => l.infer(x),
            LayerKind::Flatten(l) => l.infer(x),
            LayerKind::Dense(l) => l.infer(x),
            LayerKind::Dropout(l) => l.infer(x),
            LayerKind::Softmax(l) => l.infer(x),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        match self {
            LayerKind::Conv1d(l) => l.forward_train(x),
            LayerKind::MaxPool1d(l) => l.forward_train(x),
            LayerKind::BatchNorm1d(l) => l.forward_train(x),
            LayerKind::Flatten(l) => l.forward_train(x),
            LayerKind::Dense(l) => l.forward_train(x),
            LayerKind::Dropout(l) => l.forward_train(x),
            LayerKind::Softmax(l) => l.forward_train(x),
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor, NnError> {
        match self {
            LayerKind::Conv1d(l) => l.backward(dy),
            LayerKind::MaxPool1d(l) => l.backward(dy),
            LayerKind::BatchNorm1d(l) => l.backward(dy),
            LayerKind::Flatten(l) => l.backward(dy),
            LayerKind::Dense(l) => l.backward(dy),
            LayerKind::Dropout(l) => l.backward(dy),
            LayerKind::Softmax(l) => l.backward(dy),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            LayerKind::Conv1d(l) => vec![&l.weight, &l.bias],
            LayerKind::BatchNorm1d(l) => vec![&l.gamma, &l.beta],
            LayerKind::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            LayerKind::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            LayerKind::BatchNorm1d(l) => vec![&mut l.gamma, &mut l.beta],
            LayerKind::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let base = self.name();
        match self {
            LayerKind::Conv1d(_) | LayerKind::Dense(_) => {
                vec![format!("{base}.weight"), format!("{base}.bias")]
            }
            LayerKind::BatchNorm1d(_) => vec![format!("{base}.gamma"), format!("{base}.beta")],
            _ => Vec::new(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            LayerKind::Conv1d(l) => format!("conv1d_{}x{}to{}", l.kernel, l.c_in, l.c_out),
            LayerKind::MaxPool1d(l) => format!("maxpool1d_{}", l.size),
            LayerKind::BatchNorm1d(l) => format!("batchnorm1d_{}", l.channels),
            LayerKind::Flatten(_) => "flatten".to_string(),
            LayerKind::Dense(l) => format!("dense_{}to{}", l.f_in, l.f_out),
            LayerKind::Dropout(l) => format!("dropout_{}", l.rate),
            LayerKind::Softmax(_) => "softmax".to_string(),
        }
    }
}
