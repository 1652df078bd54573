//! Shared Local Encoder: dense layers applied identically at every spatial
//! position of a scattering map, followed by fully connected layers.
//!
//! Inputs are batches laid out `[sample, channel * positions + position]`.
//! Local layers see each `(sample, position)` pair as an independent row, so
//! weight sharing across positions is exact. After the local stack the map is
//! flattened channel-major (`k * positions + u`).

mod features;
mod train;

pub use features::{extract_all, FeatureExtractor, RawPixels, ScatteringFeatures};
pub use train::{
    evaluate, evaluate_features, sgd_step, train, train_on_features, Accuracy, EpochMetrics, SgdState,
    TrainConfig,
};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `out × in`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| T::of(rng.random_range(-bound..=bound)));
        Self {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: &ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub epsilon: T,
    /// Weight of the old running statistics in each update.
    pub momentum: T,
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

impl<T: Scalar> BatchNormState<T> {
    pub fn identity(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            epsilon: T::of(BN_EPSILON),
            momentum: T::of(BN_MOMENTUM),
        }
    }

    fn forward(&mut self, z: Array2<T>, mode: Mode) -> (Array2<T>, Option<BnCache<T>>) {
        match mode {
            Mode::Eval => {
                let inv = self.running_var.mapv(|v| T::one() / (v + self.epsilon).sqrt());
                let y = (z - &self.running_mean) * &(&inv * &self.gamma) + &self.beta;
                (y, None)
            }
            Mode::Train => {
                let n = z.nrows();
                let nt = T::of_usize(n);
                let mean = z.sum_axis(Axis(0)) / nt;
                let centered = z - &mean;
                let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / nt;
                let inv_std = var.mapv(|v| T::one() / (v + self.epsilon).sqrt());
                let x_hat = centered * &inv_std;
                let y = &x_hat * &self.gamma + &self.beta;
                let m = self.momentum;
                let unbiased = if n > 1 {
                    T::of_usize(n) / T::of_usize(n - 1)
                } else {
                    T::one()
                };
                self.running_mean = &self.running_mean * m + &mean * (T::one() - m);
                self.running_var = &self.running_var * m + &var * ((T::one() - m) * unbiased);
                (y, Some(BnCache { x_hat, inv_std }))
            }
        }
    }
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    x_hat: Array2<T>,
    inv_std: Array1<T>,
}

/// Dense layer followed by batch norm and ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub dense: DenseLayer<T>,
    pub norm: BatchNormState<T>,
}

/// Per-coefficient standardization of input features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Array1<T>,
    pub var: Array1<T>,
    pub epsilon: T,
}

pub const STANDARDIZE_EPSILON: f64 = 1e-6;

impl<T: Scalar> Standardizer<T> {
    /// Mean and (biased) variance of every column, accumulated in `f64`.
    pub fn fit(features: &ArrayView2<T>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return invalid("cannot fit a standardizer on an empty set");
        }
        let d = features.ncols();
        let mut mean = vec![0.0f64; d];
        for row in features.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.to_f64_lossy();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; d];
        for row in features.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let c = v.to_f64_lossy() - m;
                *s += c * c;
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        Ok(Self {
            mean: mean.into_iter().map(T::of).collect(),
            var: var.into_iter().map(T::of).collect(),
            epsilon: T::of(STANDARDIZE_EPSILON),
        })
    }

    pub fn apply(&self, x: &ArrayView2<T>) -> Array2<T> {
        let inv = self.var.mapv(|v| T::one() / (v + self.epsilon).sqrt());
        (x - &self.mean) * &inv
    }
}

/// Layer widths; the head width is the class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub local_widths: Vec<usize>,
    pub fc_widths: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            local_widths: vec![128, 128, 128],
            fc_widths: vec![256],
        }
    }
}

impl ModelSpec {
    /// Trainable parameters (weights, biases, batch-norm scale and shift).
    pub fn parameter_count(&self, channels: usize, positions: usize, classes: usize) -> usize {
        let mut total = 0;
        let mut width = channels;
        for &w in &self.local_widths {
            total += width * w + 3 * w;
            width = w;
        }
        let mut width = width * positions;
        for &w in &self.fc_widths {
            total += width * w + 3 * w;
            width = w;
        }
        total + width * classes + classes
    }

    /// Fully connected network on `inputs` features with `depth` hidden
    /// layers of one common width, sized to come closest to `target`
    /// parameters.
    pub fn matched_dense(target: usize, inputs: usize, classes: usize, depth: usize) -> Self {
        let count = |w: usize| {
            ModelSpec {
                local_widths: vec![],
                fc_widths: vec![w; depth],
            }
            .parameter_count(inputs, 1, classes)
        };
        let mut best = 1;
        let mut w = 1;
        while count(w) <= target {
            best = w;
            w += 1;
        }
        if w > 1 && count(w).abs_diff(target) < count(best).abs_diff(target) {
            best = w;
        }
        Self {
            local_widths: vec![],
            fc_widths: vec![best; depth],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SleModel<T> {
    pub input_channels: usize,
    pub positions: usize,
    pub class_count: usize,
    pub standardizer: Option<Standardizer<T>>,
    pub local_layers: Vec<Block<T>>,
    pub fc_layers: Vec<Block<T>>,
    /// Final linear layer producing logits.
    pub head: DenseLayer<T>,
}

/// Per-block activations kept for the backward pass.
#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Array2<T>,
    bn: BnCache<T>,
    output: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub logits: Array2<T>,
    /// Output of the local stack, flattened `[sample, k * positions + u]`.
    pub pre_flatten: Array2<T>,
    cache: Option<ForwardCache<T>>,
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    local: Vec<BlockCache<T>>,
    fc: Vec<BlockCache<T>>,
    flat: Array2<T>,
}

/// Gradients of one dense layer and its batch norm, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub gamma: Option<Array1<T>>,
    pub beta: Option<Array1<T>>,
}

/// Gradients in parameter order: local blocks, fc blocks, head.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flat views in the same order as [`SleModel::parameters_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.as_slice().expect("standard layout"));
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out
    }
}

fn relu<T: Scalar>(x: Array2<T>) -> Array2<T> {
    x.mapv_into(|v| if v > T::zero() { v } else { T::zero() })
}

/// `[B, C*P]` → `[B*P, C]`.
fn to_position_rows<T: Scalar>(x: &ArrayView2<T>, channels: usize, positions: usize) -> Array2<T> {
    let b = x.nrows();
    let mut out = Array2::zeros((b * positions, channels));
    for s in 0..b {
        let row = x.row(s);
        for c in 0..channels {
            for u in 0..positions {
                out[[s * positions + u, c]] = row[c * positions + u];
            }
        }
    }
    out
}

/// `[B*P, K]` → `[B, K*P]`.
fn flatten_positions<T: Scalar>(h: &Array2<T>, batch: usize, positions: usize) -> Array2<T> {
    let k = h.ncols();
    let mut out = Array2::zeros((batch, k * positions));
    for s in 0..batch {
        for u in 0..positions {
            let row = h.row(s * positions + u);
            for c in 0..k {
                out[[s, c * positions + u]] = row[c];
            }
        }
    }
    out
}

/// Inverse of [`flatten_positions`].
fn unflatten_positions<T: Scalar>(g: &Array2<T>, positions: usize) -> Array2<T> {
    let batch = g.nrows();
    let k = g.ncols() / positions;
    let mut out = Array2::zeros((batch * positions, k));
    for s in 0..batch {
        let row = g.row(s);
        for c in 0..k {
            for u in 0..positions {
                out[[s * positions + u, c]] = row[c * positions + u];
            }
        }
    }
    out
}

impl<T: Scalar> SleModel<T> {
    pub fn new(
        spec: &ModelSpec,
        input_channels: usize,
        positions: usize,
        class_count: usize,
        seed: u64,
    ) -> Result<Self> {
        if input_channels == 0 || positions == 0 || class_count == 0 {
            return invalid("model dimensions must be positive");
        }
        if spec.local_widths.iter().chain(&spec.fc_widths).any(|&w| w == 0) {
            return invalid("layer widths must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut width = input_channels;
        let mut local_layers = Vec::new();
        for &w in &spec.local_widths {
            local_layers.push(Block {
                dense: DenseLayer::init(width, w, &mut rng),
                norm: BatchNormState::identity(w),
            });
            width = w;
        }
        let mut width = width * positions;
        let mut fc_layers = Vec::new();
        for &w in &spec.fc_widths {
            fc_layers.push(Block {
                dense: DenseLayer::init(width, w, &mut rng),
                norm: BatchNormState::identity(w),
            });
            width = w;
        }
        let head = DenseLayer::init(width, class_count, &mut rng);
        Ok(Self {
            input_channels,
            positions,
            class_count,
            standardizer: None,
            local_layers,
            fc_layers,
            head,
        })
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            local_widths: self.local_layers.iter().map(|b| b.dense.outputs()).collect(),
            fc_widths: self.fc_layers.iter().map(|b| b.dense.outputs()).collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.input_channels * self.positions
    }

    pub fn parameter_count(&self) -> usize {
        self.spec()
            .parameter_count(self.input_channels, self.positions, self.class_count)
    }

    /// Flat mutable views of every trainable array: per layer weights, bias,
    /// then batch-norm γ and β when present; local blocks, fc blocks, head.
    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for b in self.local_layers.iter_mut().chain(self.fc_layers.iter_mut()) {
            out.push(b.dense.weights.as_slice_mut().expect("standard layout"));
            out.push(b.dense.bias.as_slice_mut().expect("standard layout"));
            out.push(b.norm.gamma.as_slice_mut().expect("standard layout"));
            out.push(b.norm.beta.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head.weights.as_slice_mut().expect("standard layout"));
        out.push(self.head.bias.as_slice_mut().expect("standard layout"));
        out
    }

    /// Forward pass. Train mode normalizes with batch statistics, updates the
    /// running statistics and keeps the activations needed by
    /// [`SleModel::backward`].
    pub fn forward(&mut self, batch: &ArrayView2<T>, mode: Mode) -> Result<ForwardPass<T>> {
        if batch.ncols() != self.input_width() {
            return invalid(format!(
                "batch has {} features, model expects {} channels x {} positions",
                batch.ncols(),
                self.input_channels,
                self.positions
            ));
        }
        let b = batch.nrows();
        let x = match &self.standardizer {
            Some(s) => s.apply(batch),
            None => batch.to_owned(),
        };
        let train = mode == Mode::Train;

        let mut local_cache = Vec::new();
        let flat = if self.local_layers.is_empty() {
            x
        } else {
            let mut h = to_position_rows(&x.view(), self.input_channels, self.positions);
            for block in self.local_layers.iter_mut() {
                let z = block.dense.forward(&h.view());
                let (y, bn) = block.norm.forward(z, mode);
                let a = relu(y);
                if train {
                    local_cache.push(BlockCache {
                        input: h,
                        bn: bn.expect("train mode caches"),
                        output: a.clone(),
                    });
                }
                h = a;
            }
            flatten_positions(&h, b, self.positions)
        };
        let pre_flatten = flat.clone();

        let mut fc_cache = Vec::new();
        let mut h = flat;
        for block in self.fc_layers.iter_mut() {
            let z = block.dense.forward(&h.view());
            let (y, bn) = block.norm.forward(z, mode);
            let a = relu(y);
            if train {
                fc_cache.push(BlockCache {
                    input: h,
                    bn: bn.expect("train mode caches"),
                    output: a.clone(),
                });
            }
            h = a;
        }
        let logits = self.head.forward(&h.view());
        let cache = train.then_some(ForwardCache {
            local: local_cache,
            fc: fc_cache,
            flat: h,
        });
        Ok(ForwardPass {
            logits,
            pre_flatten,
            cache,
        })
    }

    /// Gradients of the loss given `d loss / d logits` for a train-mode pass.
    pub fn backward(&self, pass: &ForwardPass<T>, dlogits: &Array2<T>) -> Result<Gradients<T>> {
        let cache = match &pass.cache {
            Some(c) => c,
            None => return invalid("backward needs a train-mode forward pass"),
        };
        let mut layers_rev = Vec::new();
        layers_rev.push(LayerGrad {
            weights: dlogits.t().dot(&cache.flat),
            bias: dlogits.sum_axis(Axis(0)),
            gamma: None,
            beta: None,
        });
        let mut grad = dlogits.dot(&self.head.weights);

        for (block, bc) in self.fc_layers.iter().zip(&cache.fc).rev() {
            let (lg, gin) = block_backward(block, bc, grad);
            layers_rev.push(lg);
            grad = gin;
        }
        if !self.local_layers.is_empty() {
            grad = unflatten_positions(&grad, self.positions);
            for (block, bc) in self.local_layers.iter().zip(&cache.local).rev() {
                let (lg, gin) = block_backward(block, bc, grad);
                layers_rev.push(lg);
                grad = gin;
            }
        }
        layers_rev.reverse();
        Ok(Gradients { layers: layers_rev })
    }

    /// Mean cross-entropy of a train-mode pass and all parameter gradients.
    pub fn loss_and_backward(&mut self, batch: &ArrayView2<T>, labels: &[usize]) -> Result<(f64, Gradients<T>)> {
        if labels.len() != batch.nrows() {
            return invalid(format!("{} labels for {} samples", labels.len(), batch.nrows()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.class_count) {
            return invalid(format!("label {bad} outside {} classes", self.class_count));
        }
        let pass = self.forward(batch, Mode::Train)?;
        let (loss, dlogits) = softmax_cross_entropy(&pass.logits, labels)?;
        let grads = self.backward(&pass, &dlogits)?;
        Ok((loss, grads))
    }

    /// Eval-mode logits.
    pub fn predict(&mut self, batch: &ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.forward(batch, Mode::Eval)?.logits)
    }
}

fn block_backward<T: Scalar>(block: &Block<T>, cache: &BlockCache<T>, grad_out: Array2<T>) -> (LayerGrad<T>, Array2<T>) {
    // ReLU
    let mut dy = grad_out;
    ndarray::Zip::from(&mut dy)
        .and(&cache.output)
        .for_each(|g, &a| {
            if a <= T::zero() {
                *g = T::zero();
            }
        });
    // batch norm
    let x_hat = &cache.bn.x_hat;
    let dgamma = (&dy * x_hat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    let n = T::of_usize(dy.nrows());
    let dx_hat = &dy * &block.norm.gamma;
    let sum_dx_hat = dx_hat.sum_axis(Axis(0));
    let sum_dx_hat_x = (&dx_hat * x_hat).sum_axis(Axis(0));
    let dz = (dx_hat * n - &sum_dx_hat - &(x_hat * &sum_dx_hat_x)) * &(&cache.bn.inv_std / n);
    // dense
    let lg = LayerGrad {
        weights: dz.t().dot(&cache.input),
        bias: dz.sum_axis(Axis(0)),
        gamma: Some(dgamma),
        beta: Some(dbeta),
    };
    let grad_in = dz.dot(&block.dense.weights);
    (lg, grad_in)
}

/// Mean softmax cross-entropy over the batch (accumulated in `f64`) and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Array2<T>, labels: &[usize]) -> Result<(f64, Array2<T>)> {
    let b = logits.nrows();
    if b == 0 || labels.len() != b {
        return invalid("cross-entropy needs one label per logit row");
    }
    let classes = logits.ncols();
    let mut loss = 0.0f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    for (i, row) in logits.rows().into_iter().enumerate() {
        let label = labels[i];
        if label >= classes {
            return invalid(format!("label {label} outside {classes} classes"));
        }
        let max = row.iter().map(|v| v.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64_lossy() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let log_z = z.ln() + max;
        loss += log_z - row[label].to_f64_lossy();
        for (c, e) in exps.iter().enumerate() {
            let p = e / z;
            let target = if c == label { 1.0 } else { 0.0 };
            grad[[i, c]] = T::of((p - target) / b as f64);
        }
    }
    Ok((loss / b as f64, grad))
}

/// Largest disagreement between analytic gradients and central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub checked: usize,
    pub max_relative_error: f64,
}

/// Compares every analytic gradient entry with a central difference of the
/// train-mode loss. The relative error uses `max(|a|, |b|, floor)` as the
/// denominator so entries whose exact gradient is zero (biases feeding batch
/// norm) are measured absolutely.
pub fn gradient_check(
    model: &SleModel<f64>,
    batch: &ArrayView2<f64>,
    labels: &[usize],
    step: f64,
    floor: f64,
) -> Result<GradientCheck> {
    let (_, grads) = model.clone().loss_and_backward(batch, labels)?;
    let analytic: Vec<Vec<f64>> = grads.slices().into_iter().map(|s| s.to_vec()).collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (a, g) in analytic.iter().enumerate() {
        for (i, &exact) in g.iter().enumerate() {
            let loss_at = |delta: f64| -> Result<f64> {
                let mut m = model.clone();
                m.parameters_mut()[a][i] += delta;
                Ok(m.loss_and_backward(batch, labels)?.0)
            };
            let numeric = (loss_at(step)? - loss_at(-step)?) / (2.0 * step);
            let denom = exact.abs().max(numeric.abs()).max(floor);
            worst = worst.max((exact - numeric).abs() / denom);
            checked += 1;
        }
    }
    Ok(GradientCheck {
        checked,
        max_relative_error: worst,
    })
}
