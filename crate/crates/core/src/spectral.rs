//! Discrete Fourier engine and the periodized convolution kernel used by
//! every scattering stage.
//!
//! Arrays are square, row-major, power-of-two sided, with the frequency
//! origin at index `(0, 0)`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::filterbank::FourierFilter;
use crate::scalar::Scalar;

/// Square complex array, either a spatial signal or its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage<T> {
    side: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexImage<T> {
    pub fn new(side: usize, data: Vec<Complex<T>>) -> Result<Self> {
        check_side(side)?;
        if data.len() != side * side {
            return invalid(format!(
                "complex image of side {side} needs {} samples, got {}",
                side * side,
                data.len()
            ));
        }
        Ok(Self { side, data })
    }

    pub fn zeros(side: usize) -> Result<Self> {
        check_side(side)?;
        Ok(Self {
            side,
            data: vec![Complex::new(T::zero(), T::zero()); side * side],
        })
    }

    pub fn from_real(side: usize, real: &[T]) -> Result<Self> {
        Self::new(
            side,
            real.iter().map(|&v| Complex::new(v, T::zero())).collect(),
        )
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.data[row * self.side + col]
    }

    /// Real parts, row-major.
    pub fn re(&self) -> Vec<T> {
        self.data.iter().map(|c| c.re).collect()
    }

    /// Squared ℓ2 norm accumulated in `f64`.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr().to_f64_lossy()).sum()
    }
}

fn check_side(side: usize) -> Result<()> {
    if side == 0 || !side.is_power_of_two() {
        return invalid(format!("side {side} is not a power of two"));
    }
    Ok(())
}

/// Forward and inverse 2D transforms planned for one side length.
///
/// Planning is the expensive part of an FFT; the scattering engine keeps one
/// plan per resolution and reuses it for every image.
#[derive(Clone)]
pub struct Dft2Plan<T: Scalar> {
    side: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> std::fmt::Debug for Dft2Plan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft2Plan").field("side", &self.side).finish()
    }
}

impl<T: Scalar> Dft2Plan<T> {
    pub fn new(side: usize) -> Result<Self> {
        check_side(side)?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, img: &mut ComplexImage<T>) -> Result<()> {
        self.run(img, &self.forward)
    }

    /// Inverse transform including the `1/side²` factor, in place.
    pub fn inverse(&self, img: &mut ComplexImage<T>) -> Result<()> {
        self.run(img, &self.inverse)?;
        let scale = T::one() / T::of_usize(self.side * self.side);
        for v in img.data.iter_mut() {
            *v = *v * scale;
        }
        Ok(())
    }

    fn run(&self, img: &mut ComplexImage<T>, fft: &Arc<dyn Fft<T>>) -> Result<()> {
        if img.side != self.side {
            return invalid(format!(
                "plan for side {} applied to image of side {}",
                self.side, img.side
            ));
        }
        let n = self.side;
        // rows, then columns through a transpose
        fft.process(&mut img.data);
        transpose_in_place(&mut img.data, n);
        fft.process(&mut img.data);
        transpose_in_place(&mut img.data, n);
        Ok(())
    }
}

fn transpose_in_place<C: Copy>(data: &mut [C], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Unnormalized forward 2D DFT.
pub fn dft2<T: Scalar>(img: &ComplexImage<T>) -> Result<ComplexImage<T>> {
    let mut out = img.clone();
    Dft2Plan::new(img.side)?.forward(&mut out)?;
    Ok(out)
}

/// Inverse of [`dft2`].
pub fn idft2<T: Scalar>(img: &ComplexImage<T>) -> Result<ComplexImage<T>> {
    let mut out = img.clone();
    Dft2Plan::new(img.side)?.inverse(&mut out)?;
    Ok(out)
}

/// Folds a spectrum of side `n` onto side `n / 2^k` by averaging its
/// `2^k × 2^k` translates. This is exactly the spectrum of the spatially
/// decimated signal `x(2^k u)`.
pub fn fold_spectrum<T: Scalar>(values: &[Complex<T>], side: usize, k: usize) -> Vec<Complex<T>> {
    let factor = 1usize << k;
    let m = side / factor;
    let mut out = vec![Complex::new(T::zero(), T::zero()); m * m];
    for p in 0..factor {
        for row in 0..m {
            let src_row = (row + p * m) * side;
            let dst_row = row * m;
            for q in 0..factor {
                let src = &values[src_row + q * m..src_row + q * m + m];
                for (o, s) in out[dst_row..dst_row + m].iter_mut().zip(src) {
                    *o = *o + *s;
                }
            }
        }
    }
    let scale = T::one() / T::of_usize(factor * factor);
    for v in out.iter_mut() {
        *v = *v * scale;
    }
    out
}

/// Computes `(x ⋆ h)(2^k u)` from the spectrum of `x`.
///
/// The filter must live at the same resolution as the signal. A filter at
/// resolution `r` is the decimated copy of a full-resolution filter, so the
/// product is rescaled by the cell area `4^r`; the result then approximates
/// the full-resolution convolution sampled on the coarse grid.
pub fn conv_subsample<T: Scalar>(
    signal_spectrum: &ComplexImage<T>,
    filter: &FourierFilter<T>,
    k: usize,
) -> Result<ComplexImage<T>> {
    let plan = Dft2Plan::new(signal_spectrum.side >> k.min(63))?;
    conv_subsample_with(signal_spectrum, filter, k, &plan)
}

/// [`conv_subsample`] with a caller-provided inverse plan for the output side.
pub fn conv_subsample_with<T: Scalar>(
    signal_spectrum: &ComplexImage<T>,
    filter: &FourierFilter<T>,
    k: usize,
    plan: &Dft2Plan<T>,
) -> Result<ComplexImage<T>> {
    let n = signal_spectrum.side;
    if filter.side() != n {
        return invalid(format!(
            "filter side {} (resolution {}) does not match signal side {n}",
            filter.side(),
            filter.resolution()
        ));
    }
    if k >= usize::BITS as usize || (1usize << k) > n {
        return invalid(format!("subsampling 2^{k} exceeds side {n}"));
    }
    let area = T::of_usize(1usize << (2 * filter.resolution()));
    let product: Vec<Complex<T>> = signal_spectrum
        .data
        .iter()
        .zip(filter.values())
        .map(|(x, &h)| *x * (h * area))
        .collect();
    let folded = fold_spectrum(&product, n, k);
    let mut out = ComplexImage {
        side: n >> k,
        data: folded,
    };
    plan.inverse(&mut out)?;
    Ok(out)
}

/// Elementwise complex modulus; imaginary parts of the result are zero.
pub fn modulus<T: Scalar>(img: &ComplexImage<T>) -> ComplexImage<T> {
    ComplexImage {
        side: img.side,
        data: img
            .data
            .iter()
            .map(|c| Complex::new(c.norm(), T::zero()))
            .collect(),
    }
}

/// Placement of an `height × width` image inside a `side × side` padded square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadGeometry {
    pub height: usize,
    pub width: usize,
    pub side: usize,
    pub top: usize,
    pub left: usize,
}

impl PadGeometry {
    /// Centers the image in the padded square.
    pub fn new(height: usize, width: usize, side: usize) -> Result<Self> {
        check_side(side)?;
        if height == 0 || width == 0 {
            return invalid("image has an empty dimension");
        }
        if height > side || width > side {
            return invalid(format!(
                "image {height}x{width} does not fit in padded side {side}"
            ));
        }
        Ok(Self {
            height,
            width,
            side,
            top: (side - height) / 2,
            left: (side - width) / 2,
        })
    }

    /// Rows and columns of the `2^j`-subsampled grid covering the original
    /// image: `(row0, rows, col0, cols)`.
    pub fn output_window(&self, j: usize) -> (usize, usize, usize, usize) {
        let step = 1usize << j;
        let row0 = self.top / step;
        let row1 = (self.top + self.height).div_ceil(step);
        let col0 = self.left / step;
        let col1 = (self.left + self.width).div_ceil(step);
        (row0, row1 - row0, col0, col1 - col0)
    }

    pub fn is_identity(&self) -> bool {
        self.height == self.side && self.width == self.side
    }
}

/// Mirror index into `[0, n)` without repeating the edge sample
/// (`d c b | a b c d | c b a`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Reflection-pads a row-major `height × width` real image to `side × side`.
pub fn pad_reflect<T: Scalar>(img: &[T], geom: &PadGeometry) -> Result<ComplexImage<T>> {
    if img.len() != geom.height * geom.width {
        return invalid(format!(
            "image buffer of {} samples does not match {}x{}",
            img.len(),
            geom.height,
            geom.width
        ));
    }
    let n = geom.side;
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        let sr = reflect_index(r as isize - geom.top as isize, geom.height);
        for c in 0..n {
            let sc = reflect_index(c as isize - geom.left as isize, geom.width);
            data.push(Complex::new(img[sr * geom.width + sc], T::zero()));
        }
    }
    Ok(ComplexImage { side: n, data })
}

/// Crops a `2^j`-subsampled coefficient grid back to the window covering the
/// original image. Returns `(rows, cols, values)`.
pub fn unpad<T: Copy>(
    grid: &[T],
    grid_side: usize,
    geom: &PadGeometry,
    j: usize,
) -> Result<(usize, usize, Vec<T>)> {
    if grid.len() != grid_side * grid_side || grid_side << j != geom.side {
        return invalid(format!(
            "grid of side {grid_side} is not the 2^{j} subsampling of side {}",
            geom.side
        ));
    }
    let (row0, rows, col0, cols) = geom.output_window(j);
    let mut out = Vec::with_capacity(rows * cols);
    for r in row0..row0 + rows {
        out.extend_from_slice(&grid[r * grid_side + col0..r * grid_side + col0 + cols]);
    }
    Ok((rows, cols, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::FourierFilter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn random_image(side: usize, rng: &mut ChaCha8Rng) -> ComplexImage<f64> {
        let data = (0..side * side)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexImage::new(side, data).unwrap()
    }

    /// Direct O(N⁴) DFT.
    fn naive_dft(img: &ComplexImage<f64>) -> Vec<Complex<f64>> {
        let n = img.side();
        let tau = std::f64::consts::TAU;
        let mut out = vec![c(0.0, 0.0); n * n];
        for k in 0..n {
            for l in 0..n {
                let mut acc = c(0.0, 0.0);
                for r in 0..n {
                    for s in 0..n {
                        let phase = -tau * ((k * r + l * s) % n) as f64 / n as f64;
                        acc += img.get(r, s) * Complex::from_polar(1.0, phase);
                    }
                }
                out[k * n + l] = acc;
            }
        }
        out
    }

    fn rel_err(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn delta_has_flat_spectrum() {
        let mut img = ComplexImage::<f64>::zeros(8).unwrap();
        img.data_mut()[0] = c(1.0, 0.0);
        let spec = dft2(&img).unwrap();
        assert!(spec.data().iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn constant_concentrates_at_origin() {
        let img = ComplexImage::from_real(8, &[2.5f64; 64]).unwrap();
        let spec = dft2(&img).unwrap();
        assert!((spec.get(0, 0) - c(160.0, 0.0)).norm() < 1e-12);
        assert!(spec.data()[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = random_image(16, &mut rng);
        let fast = dft2(&img).unwrap();
        assert!(rel_err(fast.data(), &naive_dft(&img)) < 1e-9);
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for side in [1usize, 2, 4, 32] {
            let img = random_image(side, &mut rng);
            let spec = dft2(&img).unwrap();
            let back = idft2(&spec).unwrap();
            assert!(rel_err(back.data(), img.data()) < 1e-10);
            let lhs = spec.norm_sqr();
            let rhs = (side * side) as f64 * img.norm_sqr();
            assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(ComplexImage::<f64>::zeros(12).is_err());
        assert!(Dft2Plan::<f32>::new(0).is_err());
        let plan = Dft2Plan::<f64>::new(8).unwrap();
        let mut img = ComplexImage::zeros(4).unwrap();
        assert!(plan.forward(&mut img).is_err());
    }

    #[test]
    fn conv_identity_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_image(16, &mut rng);
        let spec = dft2(&img).unwrap();
        let ones = FourierFilter::new(0, 16, vec![1.0; 256]).unwrap();
        let out = conv_subsample(&spec, &ones, 0).unwrap();
        assert!(rel_err(out.data(), img.data()) < 1e-12);
    }

    #[test]
    fn conv_rejects_mismatched_filter() {
        let spec = ComplexImage::<f64>::zeros(16).unwrap();
        let f = FourierFilter::new(1, 8, vec![1.0; 64]).unwrap();
        assert!(conv_subsample(&spec, &f, 0).is_err());
        let f = FourierFilter::new(0, 16, vec![1.0; 256]).unwrap();
        assert!(conv_subsample(&spec, &f, 5).is_err());
    }

    #[test]
    fn fold_constant_spectrum() {
        let ones = vec![c(1.0, 0.0); 64];
        let folded = fold_spectrum(&ones, 8, 1);
        assert_eq!(folded.len(), 16);
        assert!(folded.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn modulus_values() {
        let img = ComplexImage::new(1, vec![c(3.0, 4.0)]).unwrap();
        assert_eq!(modulus(&img).get(0, 0), c(5.0, 0.0));
        let real = ComplexImage::from_real(2, &[0.0, 1.0, 2.5, 7.0]).unwrap();
        assert_eq!(modulus(&real), real);
    }

    #[test]
    fn modulus_is_non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let x = random_image(8, &mut rng);
            let y = random_image(8, &mut rng);
            let mx = modulus(&x);
            let my = modulus(&y);
            let lhs: f64 = mx.data().iter().zip(my.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
            let rhs: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn reflect_index_pattern() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn pad_identity_and_constant() {
        let img: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let geom = PadGeometry::new(4, 4, 4).unwrap();
        assert!(geom.is_identity());
        let padded = pad_reflect(&img, &geom).unwrap();
        assert_eq!(padded.re(), img);

        let geom = PadGeometry::new(3, 5, 16).unwrap();
        let padded = pad_reflect(&[0.25f64; 15], &geom).unwrap();
        assert!(padded.re().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn pad_28_to_32_mirrors_border() {
        let img: Vec<f64> = (0..28 * 28).map(|v| v as f64).collect();
        let geom = PadGeometry::new(28, 28, 32).unwrap();
        assert_eq!((geom.top, geom.left), (2, 2));
        let padded = pad_reflect(&img, &geom).unwrap().re();
        let at = |r: usize, c: usize| padded[r * 32 + c];
        let src = |r: usize, c: usize| img[r * 28 + c];
        for r in 2..30 {
            // left border: padded columns 0, 1 mirror source columns 2, 1
            assert_eq!(at(r, 0), src(r - 2, 2));
            assert_eq!(at(r, 1), src(r - 2, 1));
            // right border: padded columns 30, 31 mirror source columns 26, 25
            assert_eq!(at(r, 30), src(r - 2, 26));
            assert_eq!(at(r, 31), src(r - 2, 25));
        }
        assert_eq!(at(0, 0), src(2, 2));
    }

    #[test]
    fn pad_rejects_oversized() {
        assert!(PadGeometry::new(33, 10, 32).is_err());
        assert!(PadGeometry::new(10, 10, 24).is_err());
    }

    #[test]
    fn unpad_windows() {
        let geom = PadGeometry::new(224, 224, 256).unwrap();
        assert_eq!(geom.output_window(4), (1, 14, 1, 14));
        let grid: Vec<u32> = (0..256).collect();
        let (rows, cols, vals) = unpad(&grid, 16, &geom, 4).unwrap();
        assert_eq!((rows, cols), (14, 14));
        assert_eq!(vals[0], 17);
        assert!(unpad(&grid, 16, &geom, 3).is_err());
    }
}
