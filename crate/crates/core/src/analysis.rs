//! Angular Fourier analysis of the first local layer and rotation-covariance
//! checks of the scattering transform.
//!
//! The first local layer maps `colors × paths` scattering channels to `K`
//! outputs. Its columns are regrouped by path order: `f0[k, c]`,
//! `f1[k, c, j1, θ1]` and `f2[k, c, (j1, j2), θ1, θ2]`, the angle axes being
//! the ones the angular DFT runs along.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::encoder::SleModel;
use crate::error::{invalid, Error, Result};
use crate::filterbank::rotate_quarter_turns;
use crate::image::Image;
use crate::scalar::Scalar;
use crate::scattering::{channel_count, enumerate_paths, Scattering, ScatteringOutput, ScatteringPath};

/// First-layer weights regrouped by scattering order, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularOperatorView {
    pub k: usize,
    pub colors: usize,
    pub j: usize,
    pub l: usize,
    /// `j1 < j2` pairs in canonical order.
    pub pairs: Vec<(usize, usize)>,
    /// `[k][c]`
    pub f0: Vec<f64>,
    /// `[k][c][j1][θ1]`
    pub f1: Vec<f64>,
    /// `[k][c][pair][θ1][θ2]`
    pub f2: Vec<f64>,
}

fn pairs(j: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j1 in 0..j {
        for j2 in j1 + 1..j {
            out.push((j1, j2));
        }
    }
    out
}

/// Where each canonical path lands inside a view.
enum Slot {
    Zero,
    One(usize, usize),
    Two(usize, usize, usize),
}

fn slots(j: usize, l: usize) -> Vec<Slot> {
    let pair_index: HashMap<(usize, usize), usize> = pairs(j).into_iter().enumerate().map(|(i, p)| (p, i)).collect();
    enumerate_paths(j, l)
        .into_iter()
        .map(|p| match p {
            ScatteringPath::Zeroth => Slot::Zero,
            ScatteringPath::First { j1, theta1 } => Slot::One(j1, theta1),
            ScatteringPath::Second {
                j1,
                theta1,
                j2,
                theta2,
            } => Slot::Two(pair_index[&(j1, j2)], theta1, theta2),
        })
        .collect()
}

impl AngularOperatorView {
    pub fn zeros(k: usize, colors: usize, j: usize, l: usize) -> Self {
        let pairs = pairs(j);
        Self {
            k,
            colors,
            j,
            l,
            f0: vec![0.0; k * colors],
            f1: vec![0.0; k * colors * j * l],
            f2: vec![0.0; k * colors * pairs.len() * l * l],
            pairs,
        }
    }

    /// Regroups the columns of a `K × colors·paths` matrix.
    pub fn from_weights<T: Scalar>(weights: &Array2<T>, colors: usize, j: usize, l: usize) -> Result<Self> {
        let expected = channel_count(j, l, colors);
        if weights.ncols() != expected {
            return invalid(format!(
                "first layer has {} inputs, scattering J={j} L={l} with {colors} colors gives {expected}",
                weights.ncols()
            ));
        }
        let k = weights.nrows();
        let mut view = Self::zeros(k, colors, j, l);
        let slots = slots(j, l);
        let paths = slots.len();
        for kk in 0..k {
            for c in 0..colors {
                for (p, slot) in slots.iter().enumerate() {
                    let w = weights[[kk, c * paths + p]].to_f64_lossy();
                    *view.slot_mut(kk, c, slot) = w;
                }
            }
        }
        Ok(view)
    }

    fn slot_mut(&mut self, k: usize, c: usize, slot: &Slot) -> &mut f64 {
        let (colors, j, l, np) = (self.colors, self.j, self.l, self.pairs.len());
        match *slot {
            Slot::Zero => &mut self.f0[k * colors + c],
            Slot::One(j1, t1) => &mut self.f1[((k * colors + c) * j + j1) * l + t1],
            Slot::Two(p, t1, t2) => &mut self.f2[(((k * colors + c) * np + p) * l + t1) * l + t2],
        }
    }

    /// Inverse of [`AngularOperatorView::from_weights`].
    pub fn to_weights<T: Scalar>(&self) -> Array2<T> {
        let slots = slots(self.j, self.l);
        let paths = slots.len();
        let mut out = Array2::zeros((self.k, self.colors * paths));
        let mut scratch = self.clone();
        for kk in 0..self.k {
            for c in 0..self.colors {
                for (p, slot) in slots.iter().enumerate() {
                    out[[kk, c * paths + p]] = T::of(*scratch.slot_mut(kk, c, slot));
                }
            }
        }
        out
    }

    fn block_len(&self, order: usize) -> usize {
        match order {
            0 => self.colors,
            1 => self.colors * self.j * self.l,
            _ => self.colors * self.pairs.len() * self.l * self.l,
        }
    }

    fn block_mut(&mut self, k: usize, order: usize) -> &mut [f64] {
        let n = self.block_len(order);
        let v = match order {
            0 => &mut self.f0,
            1 => &mut self.f1,
            _ => &mut self.f2,
        };
        &mut v[k * n..(k + 1) * n]
    }
}

/// Splits the first local layer of a model trained on scattering features.
pub fn split_first_layer<T: Scalar>(model: &SleModel<T>, colors: usize, j: usize, l: usize) -> Result<AngularOperatorView> {
    match model.local_layers.first() {
        Some(b) => AngularOperatorView::from_weights(&b.dense.weights, colors, j, l),
        None => invalid("model has no local layers"),
    }
}

/// Copy of `model` with the first local layer replaced by `view`.
pub fn install_first_layer<T: Scalar>(model: &SleModel<T>, view: &AngularOperatorView) -> Result<SleModel<T>> {
    let mut out = model.clone();
    match out.local_layers.first_mut() {
        Some(b) if b.dense.weights.dim() == (view.k, channel_count(view.j, view.l, view.colors)) => {
            b.dense.weights = view.to_weights();
            Ok(out)
        }
        Some(_) => invalid("view shape does not match the first local layer"),
        None => invalid("model has no local layers"),
    }
}

/// Per-filter, per-order ℓ2 norms removed by [`normalize_view`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// `[k][order]`
    pub norms: Vec<[f64; 3]>,
    /// `(k, order)` blocks that were zero and left unchanged.
    pub zero_filters: Vec<(usize, usize)>,
}

/// Scales every filter to unit ℓ2 norm within each order block.
pub fn normalize_view(view: &AngularOperatorView) -> (AngularOperatorView, Normalization) {
    let mut out = view.clone();
    let mut norms = Vec::with_capacity(view.k);
    let mut zero_filters = Vec::new();
    for k in 0..view.k {
        let mut row = [0.0; 3];
        for (order, slot) in row.iter_mut().enumerate() {
            let block = out.block_mut(k, order);
            let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                block.iter_mut().for_each(|v| *v /= norm);
                *slot = norm;
            } else {
                if !block.is_empty() {
                    zero_filters.push((k, order));
                }
                *slot = 0.0;
            }
        }
        norms.push(row);
    }
    (out, Normalization { norms, zero_filters })
}

/// Undoes [`normalize_view`].
pub fn denormalize_view(view: &AngularOperatorView, normalization: &Normalization) -> AngularOperatorView {
    let mut out = view.clone();
    for (k, row) in normalization.norms.iter().enumerate() {
        for (order, &norm) in row.iter().enumerate() {
            if norm > 0.0 {
                out.block_mut(k, order).iter_mut().for_each(|v| *v *= norm);
            }
        }
    }
    out
}

/// Angular Fourier coefficients of a view: `f1` along `θ1`, `f2` along
/// `(θ1, θ2)`. Layout matches the view with angles replaced by frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularSpectrum {
    pub k: usize,
    pub colors: usize,
    pub j: usize,
    pub l: usize,
    pub pairs: Vec<(usize, usize)>,
    pub f0: Vec<f64>,
    pub f1_hat: Vec<Complex64>,
    pub f2_hat: Vec<Complex64>,
}

impl AngularSpectrum {
    pub fn coefficient_count(&self) -> usize {
        self.f1_hat.len() + self.f2_hat.len()
    }

    /// Magnitudes of all first- and second-order coefficients.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.f1_hat.iter().chain(&self.f2_hat).map(|z| z.norm()).collect()
    }
}

fn plans(l: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(l), planner.plan_fft_inverse(l))
}

/// Transforms every contiguous length-`l` run, then (for `two_d`) every
/// strided column of each `l × l` block.
fn transform_runs(data: &mut [Complex64], l: usize, two_d: bool, fft: &Arc<dyn Fft<f64>>) {
    if l == 0 || data.is_empty() {
        return;
    }
    fft.process(data);
    if two_d {
        let mut col = vec![Complex64::default(); l];
        for block in data.chunks_mut(l * l) {
            for t2 in 0..l {
                for t1 in 0..l {
                    col[t1] = block[t1 * l + t2];
                }
                fft.process(&mut col);
                for t1 in 0..l {
                    block[t1 * l + t2] = col[t1];
                }
            }
        }
    }
}

/// Unnormalized DFT along the angle axes.
pub fn angular_dft(view: &AngularOperatorView) -> AngularSpectrum {
    let (fwd, _) = plans(view.l.max(1));
    let mut f1_hat: Vec<Complex64> = view.f1.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut f2_hat: Vec<Complex64> = view.f2.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_runs(&mut f1_hat, view.l, false, &fwd);
    transform_runs(&mut f2_hat, view.l, true, &fwd);
    AngularSpectrum {
        k: view.k,
        colors: view.colors,
        j: view.j,
        l: view.l,
        pairs: view.pairs.clone(),
        f0: view.f0.clone(),
        f1_hat,
        f2_hat,
    }
}

/// Inverse of [`angular_dft`] (`1/L` and `1/L²` scaling), keeping real parts.
pub fn inverse_angular_dft(spectrum: &AngularSpectrum) -> AngularOperatorView {
    let l = spectrum.l;
    let (_, inv) = plans(l.max(1));
    let mut f1 = spectrum.f1_hat.clone();
    let mut f2 = spectrum.f2_hat.clone();
    transform_runs(&mut f1, l, false, &inv);
    transform_runs(&mut f2, l, true, &inv);
    let s1 = 1.0 / l as f64;
    let s2 = s1 * s1;
    AngularOperatorView {
        k: spectrum.k,
        colors: spectrum.colors,
        j: spectrum.j,
        l,
        pairs: spectrum.pairs.clone(),
        f0: spectrum.f0.clone(),
        f1: f1.iter().map(|z| z.re * s1).collect(),
        f2: f2.iter().map(|z| z.re * s2).collect(),
    }
}

/// Fraction of first- and second-order coefficients with `|F̂| ≤ ε`.
pub fn sparsity_at(spectrum: &AngularSpectrum, epsilon: f64) -> f64 {
    let total = spectrum.coefficient_count();
    if total == 0 {
        return 0.0;
    }
    spectrum.magnitudes().iter().filter(|&&m| m <= epsilon).count() as f64 / total as f64
}

/// Smallest observed magnitude whose threshold zeroes at least `target` of
/// the coefficients.
pub fn epsilon_for_sparsity(spectrum: &AngularSpectrum, target: f64) -> f64 {
    let mut mags = spectrum.magnitudes();
    if mags.is_empty() || target <= 0.0 {
        return 0.0;
    }
    mags.sort_by(f64::total_cmp);
    let idx = ((target.min(1.0) * mags.len() as f64).ceil() as usize).clamp(1, mags.len()) - 1;
    mags[idx]
}

/// Result of [`threshold_sparsify`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sparsified<T> {
    pub model: SleModel<T>,
    pub epsilon: f64,
    pub sparsity: f64,
}

/// Zeroes the angular Fourier coefficients of the normalized first layer
/// whose magnitude is at most `epsilon`, transforms back, restores the
/// norms and installs the result in a copy of the model. `epsilon` is in
/// units of the normalized filters. `epsilon == 0` returns an exact copy.
pub fn threshold_sparsify<T: Scalar>(
    model: &SleModel<T>,
    colors: usize,
    j: usize,
    l: usize,
    epsilon: f64,
) -> Result<Sparsified<T>> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return invalid("epsilon must be non-negative");
    }
    let view = split_first_layer(model, colors, j, l)?;
    let (unit, norms) = normalize_view(&view);
    let mut spectrum = angular_dft(&unit);
    let sparsity = sparsity_at(&spectrum, epsilon);
    if epsilon == 0.0 {
        return Ok(Sparsified {
            model: model.clone(),
            epsilon,
            sparsity,
        });
    }
    for z in spectrum.f1_hat.iter_mut().chain(spectrum.f2_hat.iter_mut()) {
        if z.norm() <= epsilon {
            *z = Complex64::default();
        }
    }
    let mut back = denormalize_view(&inverse_angular_dft(&spectrum), &norms);
    back.f0 = view.f0;
    Ok(Sparsified {
        model: install_first_layer(model, &back)?,
        epsilon,
        sparsity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, max: f64) -> Self {
        let bins = bins.max(1);
        let top = if max > 0.0 { max } else { 1.0 };
        let edges = (0..=bins).map(|i| top * i as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / top) * bins as f64).floor();
            let b = if b.is_finite() { (b.max(0.0) as usize).min(bins - 1) } else { bins - 1 };
            counts[b] += 1;
        }
        Self { edges, counts }
    }
}

pub const HISTOGRAM_BINS: usize = 50;

/// Angular energy spectra of a transformed view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub l: usize,
    /// `Ω₁(ω₁)`, length `L`.
    pub omega1: Vec<f64>,
    /// `Ω₂(ω₁, ω₂)`, row-major `L × L`.
    pub omega2: Vec<f64>,
    pub histogram1: Histogram,
    pub histogram2: Histogram,
}

pub fn omega_spectra(spectrum: &AngularSpectrum) -> SpectrumReport {
    let l = spectrum.l;
    let mut omega1 = vec![0.0; l];
    for (i, z) in spectrum.f1_hat.iter().enumerate() {
        omega1[i % l] += z.norm_sqr();
    }
    let mut omega2 = vec![0.0; l * l];
    for (i, z) in spectrum.f2_hat.iter().enumerate() {
        omega2[i % (l * l)] += z.norm_sqr();
    }
    let m1: Vec<f64> = spectrum.f1_hat.iter().map(|z| z.norm()).collect();
    let m2: Vec<f64> = spectrum.f2_hat.iter().map(|z| z.norm()).collect();
    let max = m1.iter().chain(&m2).fold(0.0f64, |a, &b| a.max(b));
    SpectrumReport {
        l,
        omega1,
        omega2,
        histogram1: Histogram::new(&m1, HISTOGRAM_BINS, max),
        histogram2: Histogram::new(&m2, HISTOGRAM_BINS, max),
    }
}

impl SpectrumReport {
    /// Share of `Ω₁` at `ω₁ ∈ {−1, 0, 1}` (mod `L`).
    pub fn low_frequency_share(&self) -> f64 {
        let total: f64 = self.omega1.iter().sum();
        if total <= 0.0 || self.l == 0 {
            return 0.0;
        }
        let mut bins = vec![0, 1 % self.l, self.l - 1];
        bins.sort_unstable();
        bins.dedup();
        bins.iter().map(|&b| self.omega1[b]).sum::<f64>() / total
    }

    /// Share a spectrum flat in `ω₁` would put on the same bins.
    pub fn uniform_low_frequency_share(&self) -> f64 {
        (3.0 / self.l as f64).min(1.0)
    }
}

/// Relative Parseval errors `|ΣΩ₁ − L‖f1‖²| / (L‖f1‖²)` and the `L²`
/// counterpart for `Ω₂`; zero when both sides vanish.
pub fn parseval_errors(view: &AngularOperatorView, report: &SpectrumReport) -> (f64, f64) {
    let l = view.l as f64;
    let rel = |lhs: f64, rhs: f64| {
        if rhs == 0.0 {
            lhs.abs()
        } else {
            (lhs - rhs).abs() / rhs
        }
    };
    let e1: f64 = view.f1.iter().map(|v| v * v).sum();
    let e2: f64 = view.f2.iter().map(|v| v * v).sum();
    (
        rel(report.omega1.iter().sum(), l * e1),
        rel(report.omega2.iter().sum(), l * l * e2),
    )
}

/// Relative ℓ2 errors of the rotation-covariance identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub quarter_turns: usize,
    pub angle_shift: usize,
    pub order0_error: f64,
    pub order1_error: f64,
    /// Both angles shifted.
    pub order2_error: f64,
    /// Only `θ1` shifted.
    pub order2_theta1_only_error: f64,
}

/// Rotates a square image of the bank's side by `quarter_turns · 90°` about
/// pixel `(0, 0)` and compares `S(r x)` at angle-shifted paths with the
/// spatially rotated `S x`.
pub fn covariance_check<T: Scalar>(
    image: &Image<T>,
    scattering: &Scattering<T>,
    quarter_turns: usize,
) -> Result<CovarianceReport> {
    let cfg = scattering.bank().config();
    let l = cfg.l;
    if l % 4 != 0 {
        return Err(Error::Unsupported(format!(
            "rotation covariance needs L divisible by 4, got L={l}"
        )));
    }
    if quarter_turns > 3 {
        return invalid("quarter_turns must be 0, 1, 2 or 3");
    }
    if image.height() != cfg.n || image.width() != cfg.n {
        return invalid(format!(
            "covariance check needs a {n}x{n} image so rotation is exact on the periodic grid",
            n = cfg.n
        ));
    }
    let shift = quarter_turns * l / 4;
    let base = scattering.transform(image)?;
    let turned = scattering.transform(&image.rotate_quarter_turns(quarter_turns)?)?;
    let index: HashMap<ScatteringPath, usize> = turned.paths.iter().enumerate().map(|(i, p)| (*p, i)).collect();

    let theta1_only = |p: &ScatteringPath| match *p {
        ScatteringPath::Second {
            j1,
            theta1,
            j2,
            theta2,
        } => ScatteringPath::Second {
            j1,
            theta1: (theta1 + shift) % l,
            j2,
            theta2,
        },
        other => other.rotated(shift, l),
    };
    let err = |order: usize, map: &dyn Fn(&ScatteringPath) -> ScatteringPath| {
        relative_error(&base, &turned, &index, order, quarter_turns, map)
    };
    Ok(CovarianceReport {
        quarter_turns,
        angle_shift: shift,
        order0_error: err(0, &|p| p.rotated(shift, l)),
        order1_error: err(1, &|p| p.rotated(shift, l)),
        order2_error: err(2, &|p| p.rotated(shift, l)),
        order2_theta1_only_error: err(2, &theta1_only),
    })
}

fn relative_error<T: Scalar>(
    base: &ScatteringOutput<T>,
    turned: &ScatteringOutput<T>,
    index: &HashMap<ScatteringPath, usize>,
    order: usize,
    quarter_turns: usize,
    map: &dyn Fn(&ScatteringPath) -> ScatteringPath,
) -> f64 {
    let side = base.rows;
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for c in 0..base.colors {
        for (p, path) in base.paths.iter().enumerate() {
            if path.order() != order {
                continue;
            }
            let expected = rotate_quarter_turns(base.channel(c, p), side, quarter_turns);
            let got = turned.channel(c, index[&map(path)]);
            for (a, b) in got.iter().zip(&expected) {
                let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
                diff += (a - b) * (a - b);
                norm += b * b;
            }
        }
    }
    if norm == 0.0 {
        diff.sqrt()
    } else {
        (diff / norm).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ModelSpec;
    use crate::filterbank::{FilterBank, FilterBankConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(k: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((k, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn model(k: usize, seed: u64) -> SleModel<f64> {
        let spec = ModelSpec {
            local_widths: vec![k],
            fc_widths: vec![],
        };
        SleModel::new(&spec, 243, 4, 10, seed).unwrap()
    }

    #[test]
    fn split_sizes_and_round_trip() {
        let w = random_weights(128, 243, 1);
        let v = AngularOperatorView::from_weights(&w, 3, 2, 8).unwrap();
        assert_eq!(v.f0.len(), 128 * 3);
        assert_eq!(v.f1.len(), 128 * 3 * 2 * 8);
        assert_eq!(v.f2.len(), 128 * 3 * 64);
        assert_eq!(v.to_weights::<f64>(), w);
        assert!(AngularOperatorView::from_weights(&random_weights(4, 242, 0), 3, 2, 8).is_err());

        let w32 = w.mapv(|x| x as f32);
        let v32 = AngularOperatorView::from_weights(&w32, 3, 2, 8).unwrap();
        assert_eq!(v32.to_weights::<f32>(), w32);
    }

    #[test]
    fn order_sums_match_direct_columns() {
        let (j, l, colors) = (3, 4, 2);
        let paths = enumerate_paths(j, l);
        let w = random_weights(5, colors * paths.len(), 2);
        let v = AngularOperatorView::from_weights(&w, colors, j, l).unwrap();
        for k in 0..5 {
            let mut direct = [0.0f64; 3];
            for c in 0..colors {
                for (p, path) in paths.iter().enumerate() {
                    direct[path.order()] += w[[k, c * paths.len() + p]];
                }
            }
            let blocks = [&v.f0, &v.f1, &v.f2];
            for order in 0..3 {
                let n = blocks[order].len() / 5;
                let s: f64 = blocks[order][k * n..(k + 1) * n].iter().sum();
                assert!((s - direct[order]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn normalization() {
        let w = random_weights(6, 243, 3);
        let v = AngularOperatorView::from_weights(&w, 3, 2, 8).unwrap();
        let (unit, norms) = normalize_view(&v);
        let mut u2 = unit.clone();
        for k in 0..6 {
            for order in 0..3 {
                let n: f64 = u2.block_mut(k, order).iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() <= 1e-10);
            }
        }
        let (again, _) = normalize_view(&unit);
        for (a, b) in again.f2.iter().zip(&unit.f2) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut scaled = unit.clone();
        scaled.f1.iter_mut().for_each(|x| *x *= 7.0);
        let (_, n7) = normalize_view(&scaled);
        assert!(n7.norms.iter().all(|r| (r[1] - 7.0).abs() < 1e-12));
        let back = denormalize_view(&unit, &norms);
        for (a, b) in back.f1.iter().zip(&v.f1) {
            assert!((a - b).abs() < 1e-12);
        }

        let zero = AngularOperatorView::zeros(2, 3, 2, 8);
        let (z, report) = normalize_view(&zero);
        assert_eq!(z, zero);
        assert_eq!(report.zero_filters.len(), 6);
    }

    #[test]
    fn dft_tones_and_round_trip() {
        let l = 8;
        let mut v = AngularOperatorView::zeros(1, 1, 1, l);
        v.f1.iter_mut().for_each(|x| *x = 2.5);
        let s = angular_dft(&v);
        assert!((s.f1_hat[0].re - 20.0).abs() < 1e-12);
        assert!(s.f1_hat[1..].iter().all(|z| z.norm() < 1e-12));
        let r = omega_spectra(&s);
        assert!(r.omega1[1..].iter().all(|&x| x < 1e-20));

        // cos/sin planes of the tone e^{2πit/L}
        let tone = |f: fn(f64) -> f64| {
            let mut v = AngularOperatorView::zeros(1, 1, 1, l);
            for t in 0..l {
                v.f1[t] = f(2.0 * std::f64::consts::PI * t as f64 / l as f64);
            }
            angular_dft(&v)
        };
        let (re, im) = (tone(f64::cos), tone(f64::sin));
        let combined: Vec<Complex64> = re
            .f1_hat
            .iter()
            .zip(&im.f1_hat)
            .map(|(a, b)| a + Complex64::i() * b)
            .collect();
        for (w, z) in combined.iter().enumerate() {
            if w == 1 {
                assert!((z.re - l as f64).abs() < 1e-12);
            } else {
                assert!(z.norm() < 1e-12, "{w} {z}");
            }
        }

        let w = random_weights(7, 243, 5);
        let v = AngularOperatorView::from_weights(&w, 3, 2, 8).unwrap();
        let back = inverse_angular_dft(&angular_dft(&v));
        for (a, b) in back.f1.iter().chain(&back.f2).zip(v.f1.iter().chain(&v.f2)) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn parseval_and_zero_spectra() {
        let w = random_weights(9, 243, 6);
        let (unit, _) = normalize_view(&AngularOperatorView::from_weights(&w, 3, 2, 8).unwrap());
        let report = omega_spectra(&angular_dft(&unit));
        let (e1, e2) = parseval_errors(&unit, &report);
        assert!(e1 <= 1e-12 && e2 <= 1e-12);
        assert!(report.omega1.iter().chain(&report.omega2).all(|&x| x >= 0.0));
        assert_eq!(report.histogram1.counts.iter().sum::<usize>(), 9 * 3 * 2 * 8);

        let zero = omega_spectra(&angular_dft(&AngularOperatorView::zeros(2, 3, 2, 8)));
        assert!(zero.omega1.iter().chain(&zero.omega2).all(|&x| x == 0.0));
        assert_eq!(zero.low_frequency_share(), 0.0);
    }

    #[test]
    fn sparsify_identity_and_extremes() {
        let mut m = model(16, 7);
        let x = random_weights(20, 243 * 4, 8);
        let base = m.predict(&x.view()).unwrap();

        let s0 = threshold_sparsify(&m, 3, 2, 8, 0.0).unwrap();
        assert_eq!(s0.sparsity, 0.0);
        assert_eq!(s0.model, m);

        let mut tiny = threshold_sparsify(&m, 3, 2, 8, 1e-300).unwrap();
        let out = tiny.model.predict(&x.view()).unwrap();
        for (a, b) in out.iter().zip(&base) {
            assert!((a - b).abs() <= 1e-10);
        }

        let inf = threshold_sparsify(&m, 3, 2, 8, f64::INFINITY).unwrap();
        assert_eq!(inf.sparsity, 1.0);
        let v = split_first_layer(&inf.model, 3, 2, 8).unwrap();
        assert!(v.f1.iter().chain(&v.f2).all(|&x| x.abs() < 1e-12));
        assert_eq!(v.f0, split_first_layer(&m, 3, 2, 8).unwrap().f0);
    }

    #[test]
    fn sparsity_target_and_monotonicity() {
        let m = model(32, 9);
        let (unit, _) = normalize_view(&split_first_layer(&m, 3, 2, 8).unwrap());
        let spec = angular_dft(&unit);
        let eps = epsilon_for_sparsity(&spec, 0.8);
        let s = threshold_sparsify(&m, 3, 2, 8, eps).unwrap();
        assert!((s.sparsity - 0.8).abs() <= 0.005, "{}", s.sparsity);
        let mut last = 0.0;
        for e in [0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let sp = sparsity_at(&spec, e);
            assert!(sp >= last);
            last = sp;
        }
    }

    fn blob(n: usize) -> Image<f64> {
        let sigma = n as f64 / 8.0;
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                // periodic distance to the origin
                let dr = r.min(n - r) as f64;
                let dc = c.min(n - c) as f64;
                data.push((-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp());
            }
        }
        Image::new(1, n, n, data).unwrap()
    }

    #[test]
    fn covariance_on_blob() {
        let sc = Scattering::new(FilterBank::<f64>::new(FilterBankConfig::default()).unwrap()).unwrap();
        let img = blob(32);
        let zero = covariance_check(&img, &sc, 0).unwrap();
        assert_eq!(zero.order1_error, 0.0);
        assert_eq!(zero.order2_error, 0.0);
        for q in 1..4 {
            let r = covariance_check(&img, &sc, q).unwrap();
            assert!(r.order1_error <= 0.05, "{r:?}");
            assert!(r.order2_error <= r.order2_theta1_only_error + 1e-12, "{r:?}");
        }
        assert!(covariance_check(&img, &sc, 4).is_err());
        assert!(covariance_check(&Image::filled(1, 28, 28, 0.0), &sc, 1).is_err());

        let cfg6 = FilterBankConfig {
            l: 6,
            ..FilterBankConfig::default()
        };
        let sc6 = Scattering::new(FilterBank::<f64>::new(cfg6).unwrap()).unwrap();
        assert!(matches!(covariance_check(&img, &sc6, 1), Err(Error::Unsupported(_))));
    }
}
