//! Procedural images: periodic power-law textures with occluding disks, a
//! periodic Gaussian blob, and a labelled oriented-grating dataset used as a
//! stand-in for natural image classification when no dataset is present.

use std::f64::consts::PI;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{derive_seed, LabeledImageSet};
use crate::error::{invalid, Result};
use crate::filterbank::frequency;
use crate::image::Image;
use crate::scalar::Scalar;
use crate::spectral::{idft2, ComplexImage};

const TAG_NATURAL: u64 = 0x6e61;
const TAG_TEXTURE: u64 = 0x7478;

fn rescale_unit(plane: &mut [f64]) {
    let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    plane.iter_mut().for_each(|v| *v = (*v - lo) / span);
}

/// Periodic noise with amplitude spectrum `(1 + |ω| side / 2π)^-alpha`.
fn power_law_plane(side: usize, alpha: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mut spec = Vec::with_capacity(side * side);
    for m in 0..side {
        for n in 0..side {
            let (w1, w2) = (frequency(m, side), frequency(n, side));
            let r = (w1 * w1 + w2 * w2).sqrt() * side as f64 / (2.0 * PI);
            let amp = if m == 0 && n == 0 { 0.0 } else { (1.0 + r).powf(-alpha) };
            let phase = rng.random_range(0.0..2.0 * PI);
            spec.push(Complex::from_polar(amp, phase));
        }
    }
    Ok(idft2(&ComplexImage::new(side, spec)?)?.re())
}

/// Natural-looking periodic test images in `[0, 1]`: power-law background
/// plus a few soft-edged disks, with correlated color planes.
pub fn natural_images<T: Scalar>(count: usize, colors: usize, side: usize, seed: u64) -> Result<Vec<Image<T>>> {
    if side == 0 || colors == 0 {
        return invalid("image dimensions must be positive");
    }
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_NATURAL, i as u64, 0));
            let mut base = power_law_plane(side, 1.6, &mut rng)?;
            rescale_unit(&mut base);
            for _ in 0..rng.random_range(2..5) {
                let (cr, cc) = (rng.random_range(0.0..side as f64), rng.random_range(0.0..side as f64));
                let radius = rng.random_range(0.08..0.25) * side as f64;
                let level = rng.random_range(0.0..1.0);
                for r in 0..side {
                    for c in 0..side {
                        let dr = periodic_offset(r as f64 - cr, side);
                        let dc = periodic_offset(c as f64 - cc, side);
                        let edge = ((dr * dr + dc * dc).sqrt() - radius).clamp(-1.0, 1.0);
                        let inside = 0.5 * (1.0 - edge);
                        let v = &mut base[r * side + c];
                        *v = *v * (1.0 - inside) + level * inside;
                    }
                }
            }
            let mut data = Vec::with_capacity(colors * side * side);
            for _ in 0..colors {
                let mut own = power_law_plane(side, 2.0, &mut rng)?;
                rescale_unit(&mut own);
                let gain = rng.random_range(0.6..1.0);
                let mut plane: Vec<f64> = base.iter().zip(&own).map(|(b, o)| gain * b + 0.25 * o).collect();
                rescale_unit(&mut plane);
                data.extend(plane.into_iter().map(T::of));
            }
            Image::new(colors, side, side, data)
        })
        .collect()
}

fn periodic_offset(d: f64, side: usize) -> f64 {
    let s = side as f64;
    let d = d.rem_euclid(s);
    if d > s / 2.0 {
        d - s
    } else {
        d
    }
}

/// Isotropic Gaussian centered on pixel `(0, 0)` of the torus.
pub fn periodic_blob<T: Scalar>(colors: usize, side: usize, sigma: f64) -> Image<T> {
    let mut plane = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let dr = r.min(side - r) as f64;
            let dc = c.min(side - c) as f64;
            plane.push(T::of((-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let data = (0..colors).flat_map(|_| plane.iter().copied()).collect();
    Image::new(colors, side, side, data).expect("consistent size")
}

/// Orientation and spatial frequency (cycles per pixel) of a class.
pub fn texture_class(class: usize, classes: usize) -> (f64, f64) {
    let orientations = classes.div_ceil(2).max(1);
    let theta = PI * (class % orientations) as f64 / orientations as f64;
    let freq = if class / orientations == 0 { 0.09 } else { 0.2 };
    (theta, freq)
}

/// `per_class` images per class of random-phase gratings at the class's
/// orientation and frequency (with jitter), over power-law clutter, each
/// color plane with its own contrast.
pub fn oriented_textures<T: Scalar>(
    per_class: usize,
    classes: usize,
    colors: usize,
    side: usize,
    seed: u64,
) -> Result<LabeledImageSet<T>> {
    if classes == 0 || side == 0 || colors == 0 {
        return invalid("dataset dimensions must be positive");
    }
    let mut images = Vec::with_capacity(per_class * classes);
    let mut labels = Vec::with_capacity(per_class * classes);
    for i in 0..per_class {
        for class in 0..classes {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_TEXTURE, class as u64, i as u64));
            let (theta0, f0) = texture_class(class, classes);
            let mut signal = vec![0.0f64; side * side];
            for _ in 0..3 {
                let theta = theta0 + rng.random_range(-0.12..0.12);
                let f = f0 * rng.random_range(0.85..1.15);
                let phase = rng.random_range(0.0..2.0 * PI);
                let amp = rng.random_range(0.5..1.0);
                let (cy, cx) = (rng.random_range(0.0..side as f64), rng.random_range(0.0..side as f64));
                let width = rng.random_range(0.25..0.5) * side as f64;
                for r in 0..side {
                    for c in 0..side {
                        let (y, x) = (r as f64, c as f64);
                        let arg = 2.0 * PI * f * (x * theta.cos() + y * theta.sin()) + phase;
                        let dy = periodic_offset(y - cy, side);
                        let dx = periodic_offset(x - cx, side);
                        let env = (-(dx * dx + dy * dy) / (2.0 * width * width)).exp();
                        signal[r * side + c] += amp * env * arg.cos();
                    }
                }
            }
            let mut clutter = power_law_plane(side, 1.4, &mut rng)?;
            let scale = clutter.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let sig_scale = signal.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            clutter.iter_mut().for_each(|v| *v *= 1.2 * sig_scale / scale);
            let mut data = Vec::with_capacity(colors * side * side);
            for _ in 0..colors {
                let contrast = rng.random_range(0.4..1.0);
                let noise = rng.random_range(0.05..0.15);
                let mut plane: Vec<f64> = signal
                    .iter()
                    .zip(&clutter)
                    .map(|(s, c)| contrast * s + c + noise * rng.random_range(-1.0..1.0) * sig_scale / side as f64)
                    .collect();
                rescale_unit(&mut plane);
                data.extend(plane.into_iter().map(T::of));
            }
            images.push(Image::new(colors, side, side, data)?);
            labels.push(class);
        }
    }
    LabeledImageSet::new(images, labels, classes)
}
