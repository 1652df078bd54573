use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{extract_all, FeatureExtractor};
use super::{Gradients, Mode, ModelSpec, SleModel, Standardizer};
use crate::data::{augment, derive_seed, LabeledImageSet};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_AUGMENT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_epochs: Vec<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Reflection padding for random crops; 0 disables cropping.
    pub crop_padding: usize,
    pub horizontal_flip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            lr_initial: 0.05,
            lr_drop_factor: 0.1,
            lr_drop_epochs: vec![15, 25],
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            crop_padding: 4,
            horizontal_flip: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return invalid("batch_size must be at least 2 for batch statistics");
        }
        if !(self.lr_initial.is_finite() && self.lr_initial > 0.0) {
            return invalid("lr_initial must be positive");
        }
        if !(self.lr_drop_factor.is_finite() && self.lr_drop_factor > 0.0) {
            return invalid("lr_drop_factor must be positive");
        }
        if self.lr_drop_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("lr_drop_epochs must be strictly increasing");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return invalid("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return invalid("weight_decay must be non-negative");
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch.
    pub fn lr(&self, epoch: usize) -> f64 {
        let drops = self.lr_drop_epochs.iter().filter(|&&e| epoch >= e).count();
        self.lr_initial * self.lr_drop_factor.powi(drops as i32)
    }

    fn augments(&self) -> bool {
        self.crop_padding > 0 || self.horizontal_flip
    }
}

/// Momentum buffers, one per parameter array.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgdState<T> {
    pub velocity: Vec<Vec<T>>,
}

impl<T: Scalar> SgdState<T> {
    /// `v ← μ v + (g + λ w)`, `w ← w − lr v` for every parameter array.
    pub fn apply(&mut self, params: Vec<&mut [T]>, grads: Vec<&[T]>, lr: f64, momentum: f64, weight_decay: f64) {
        assert_eq!(params.len(), grads.len(), "gradients shaped like parameters");
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        let (lr, mu, wd) = (T::of(lr), T::of(momentum), T::of(weight_decay));
        for ((w, g), v) in params.into_iter().zip(grads).zip(self.velocity.iter_mut()) {
            assert_eq!(w.len(), g.len(), "gradient length");
            for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = mu * *v + (g + wd * *w);
                *w = *w - lr * *v;
            }
        }
    }
}

pub fn sgd_step<T: Scalar>(
    model: &mut SleModel<T>,
    grads: &Gradients<T>,
    config: &TrainConfig,
    epoch: usize,
    state: &mut SgdState<T>,
) {
    state.apply(
        model.parameters_mut(),
        grads.slices(),
        config.lr(epoch),
        config.momentum,
        config.weight_decay,
    );
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Running top-1 accuracy of the train-mode passes during the epoch.
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub count: usize,
    pub top1: f64,
    /// Present when there are at least five classes.
    pub top5: Option<f64>,
}

/// Class indices by descending score, ties toward the lower index.
fn ranking<T: Scalar>(row: ndarray::ArrayView1<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx
}

fn argmax<T: Scalar>(row: ndarray::ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const EVAL_CHUNK: usize = 256;

/// Eval-mode accuracy on precomputed features.
pub fn evaluate_features<T: Scalar>(model: &mut SleModel<T>, features: &ArrayView2<T>, labels: &[usize]) -> Result<Accuracy> {
    if features.nrows() != labels.len() {
        return invalid("one label per feature row required");
    }
    let n = labels.len();
    if n == 0 {
        return invalid("cannot evaluate on an empty set");
    }
    let (mut hit1, mut hit5) = (0usize, 0usize);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let logits = model.predict(&features.slice(ndarray::s![start..end, ..]))?;
        for (row, &label) in logits.rows().into_iter().zip(&labels[start..end]) {
            if argmax(row) == label {
                hit1 += 1;
            }
            if ranking(row).iter().take(5).any(|&c| c == label) {
                hit5 += 1;
            }
        }
    }
    Ok(Accuracy {
        count: n,
        top1: hit1 as f64 / n as f64,
        top5: (model.class_count >= 5).then(|| hit5 as f64 / n as f64),
    })
}

pub fn evaluate<T: Scalar, F: FeatureExtractor<T> + ?Sized>(
    model: &mut SleModel<T>,
    set: &LabeledImageSet<T>,
    extractor: &F,
) -> Result<Accuracy> {
    let (_, _, features) = extract_all(extractor, &set.images)?;
    evaluate_features(model, &features.view(), &set.labels)
}

fn rows<T: Scalar>(features: &Array2<T>, indices: &[usize]) -> Array2<T> {
    features.select(Axis(0), indices)
}

/// Trains on images, re-extracting augmented features every epoch when
/// augmentation is enabled.
pub fn train<T: Scalar, F: FeatureExtractor<T> + ?Sized>(
    train_set: &LabeledImageSet<T>,
    validation: Option<&LabeledImageSet<T>>,
    extractor: &F,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<(SleModel<T>, Vec<EpochMetrics>)> {
    config.validate()?;
    if train_set.len() < 2 {
        return invalid("training needs at least two samples");
    }
    let (channels, positions, clean) = extract_all(extractor, &train_set.images)?;
    let val = match validation {
        Some(v) if !v.is_empty() => Some((extract_all(extractor, &v.images)?.2, v.labels.clone())),
        _ => None,
    };
    let source = |epoch: usize, idx: &[usize]| -> Result<Array2<T>> {
        if !config.augments() {
            return Ok(rows(&clean, idx));
        }
        let images: Vec<_> = idx
            .iter()
            .map(|&i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_AUGMENT, epoch as u64, i as u64));
                augment(&train_set.images[i], config.crop_padding, config.horizontal_flip, &mut rng)
            })
            .collect();
        let maps: Vec<Vec<T>> = images
            .par_iter()
            .map(|img| extractor.extract(img).map(|m| m.2))
            .collect::<Result<_>>()?;
        let flat: Vec<T> = maps.into_iter().flatten().collect();
        Ok(Array2::from_shape_vec((idx.len(), channels * positions), flat).expect("consistent feature shape"))
    };
    run(
        &clean,
        &train_set.labels,
        channels,
        positions,
        train_set.class_count,
        val.as_ref().map(|(f, l)| (f, l.as_slice())),
        spec,
        config,
        source,
    )
}

/// Trains on fixed feature rows `[sample, channel * positions + position]`;
/// augmentation flags are ignored.
#[allow(clippy::too_many_arguments)]
pub fn train_on_features<T: Scalar>(
    features: &Array2<T>,
    labels: &[usize],
    channels: usize,
    positions: usize,
    class_count: usize,
    validation: Option<(&Array2<T>, &[usize])>,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<(SleModel<T>, Vec<EpochMetrics>)> {
    config.validate()?;
    if features.nrows() < 2 {
        return invalid("training needs at least two samples");
    }
    run(
        features,
        labels,
        channels,
        positions,
        class_count,
        validation,
        spec,
        config,
        |_, idx: &[usize]| Ok(rows(features, idx)),
    )
}

#[allow(clippy::too_many_arguments)]
fn run<T: Scalar>(
    clean: &Array2<T>,
    labels: &[usize],
    channels: usize,
    positions: usize,
    class_count: usize,
    validation: Option<(&Array2<T>, &[usize])>,
    spec: &ModelSpec,
    config: &TrainConfig,
    source: impl Fn(usize, &[usize]) -> Result<Array2<T>>,
) -> Result<(SleModel<T>, Vec<EpochMetrics>)> {
    let n = clean.nrows();
    if labels.len() != n {
        return invalid("one label per training sample required");
    }
    if clean.ncols() != channels * positions {
        return invalid("feature width does not match channels x positions");
    }
    let mut model = SleModel::new(
        spec,
        channels,
        positions,
        class_count,
        derive_seed(config.seed, STREAM_INIT, 0, 0),
    )?;
    model.standardizer = Some(Standardizer::fit(&clean.view())?);
    let mut state = SgdState::default();
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_SHUFFLE, epoch as u64, 0));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0f64, 0usize, 0usize);
        for batch in order.chunks(config.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let x = source(epoch, batch)?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let pass = model.forward(&x.view(), Mode::Train)?;
            let (loss, dlogits) = super::softmax_cross_entropy(&pass.logits, &y)?;
            let grads = model.backward(&pass, &dlogits)?;
            sgd_step(&mut model, &grads, config, epoch, &mut state);
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            correct += pass
                .logits
                .rows()
                .into_iter()
                .zip(&y)
                .filter(|(row, &l)| argmax(row.view()) == l)
                .count();
        }
        let validation_accuracy = match validation {
            Some((f, l)) => Some(evaluate_features(&mut model, &f.view(), l)?.top1),
            None => None,
        };
        metrics.push(EpochMetrics {
            epoch,
            lr: config.lr(epoch),
            train_loss: loss_sum / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            validation_accuracy,
        });
    }
    Ok((model, metrics))
}
