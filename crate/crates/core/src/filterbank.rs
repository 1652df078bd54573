//! Morlet wavelets and the Gaussian low-pass, sampled in the Fourier domain
//! and periodized to every resolution the cascade visits.
//!
//! Frequencies are indexed `(row, col)` with the origin at `(0, 0)`. The
//! orientation `θ = 2π t / L` points the wavelet along the (row, col)
//! direction `(-sin θ, cos θ)`, so that index `t + L/4` is the exact
//! [`rotate_quarter_turns`] image of index `t`.

use std::borrow::Cow;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Number of `2π` translates summed on each side when sampling an analytic
/// spectrum on the discrete torus.
const TRANSLATES: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterBankConfig {
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub morlet_sigma: f64,
    pub morlet_xi: f64,
    pub morlet_slant: f64,
}

impl Default for FilterBankConfig {
    fn default() -> Self {
        Self::new(2, 8, 32)
    }
}

impl FilterBankConfig {
    /// Standard Morlet parameters: `σ = 0.8`, `ξ = 3π/4`, slant `8/L`.
    ///
    /// Orientations span the full circle, so the angular spacing `2π/L`
    /// matches the usual half-circle bank of `L/2` angles with slant `4/(L/2)`.
    pub fn new(j: usize, l: usize, n: usize) -> Self {
        Self {
            j,
            l,
            n,
            morlet_sigma: 0.8,
            morlet_xi: 3.0 * PI / 4.0,
            morlet_slant: 8.0 / l.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.j == 0 || self.l == 0 {
            return invalid(format!("J={} and L={} must be at least 1", self.j, self.l));
        }
        if !self.n.is_power_of_two() {
            return invalid(format!("N={} is not a power of two", self.n));
        }
        if self.j >= 30 || self.n % (1 << self.j) != 0 || self.n <= 1 << self.j {
            return invalid(format!(
                "N={} must be a multiple of 2^J={} leaving an output grid of side at least 2",
                self.n,
                1u64 << self.j.min(63)
            ));
        }
        if !(self.morlet_sigma > 0.0 && self.morlet_sigma.is_finite()) {
            return invalid(format!("morlet_sigma={} must be positive", self.morlet_sigma));
        }
        if !(self.morlet_xi > 0.0 && self.morlet_xi < PI) {
            return invalid(format!("morlet_xi={} must lie in (0, π)", self.morlet_xi));
        }
        if !(self.morlet_slant > 0.0 && self.morlet_slant.is_finite()) {
            return invalid(format!("morlet_slant={} must be positive", self.morlet_slant));
        }
        Ok(())
    }

    /// Orientation of angle index `t` in radians.
    pub fn angle(&self, t: usize) -> f64 {
        2.0 * PI * t as f64 / self.l as f64
    }
}

/// Real Fourier samples of a filter at resolution `r` (side `N / 2^r`).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFilter<T> {
    resolution: usize,
    side: usize,
    values: Vec<T>,
}

impl<T: Scalar> FourierFilter<T> {
    pub fn new(resolution: usize, side: usize, values: Vec<T>) -> Result<Self> {
        if !side.is_power_of_two() || values.len() != side * side {
            return invalid(format!(
                "filter of side {side} needs a power-of-two side and {} values, got {}",
                side * side,
                values.len()
            ));
        }
        Ok(Self {
            resolution,
            side,
            values,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.side + col]
    }

    pub fn peak(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }

    fn scaled(mut self, gain: T) -> Self {
        for v in self.values.iter_mut() {
            *v = *v * gain;
        }
        self
    }
}

/// Signed angular frequency of DFT index `m` on a grid of side `n`, in `[-π, π)`.
pub fn frequency(m: usize, n: usize) -> f64 {
    let m = if m >= n / 2 { m as f64 - n as f64 } else { m as f64 };
    2.0 * PI * m / n as f64
}

/// Samples `f(ω_row, ω_col)` on the `n × n` grid, summing `2π` translates so
/// the result is the DFT of the sampled spatial filter.
fn sample_periodic(n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        let wr = frequency(r, n);
        for c in 0..n {
            let wc = frequency(c, n);
            let mut acc = 0.0;
            for a in -TRANSLATES..=TRANSLATES {
                for b in -TRANSLATES..=TRANSLATES {
                    acc += f(wr + 2.0 * PI * a as f64, wc + 2.0 * PI * b as f64);
                }
            }
            out.push(acc);
        }
    }
    out
}

fn to_filter<T: Scalar>(n: usize, values: Vec<f64>) -> FourierFilter<T> {
    FourierFilter {
        resolution: 0,
        side: n,
        values: values.into_iter().map(T::of).collect(),
    }
}

/// Full-resolution Morlet `ψ̂_{j,θ}` with unit Gabor peak and zero DC.
pub fn build_morlet<T: Scalar>(
    j: usize,
    theta_index: usize,
    config: &FilterBankConfig,
) -> Result<FourierFilter<T>> {
    config.validate()?;
    if j >= config.j || theta_index >= config.l {
        return invalid(format!(
            "wavelet index (j={j}, θ={theta_index}) outside J={} L={}",
            config.j, config.l
        ));
    }
    let theta = config.angle(theta_index);
    // (row, col) unit vectors along and across the oscillation
    let (dr, dc) = (-theta.sin(), theta.cos());
    let (er, ec) = (-theta.cos(), -theta.sin());
    let scale = (1u64 << j) as f64;
    let s2 = (config.morlet_sigma * scale).powi(2);
    let across = s2 / config.morlet_slant.powi(2);
    let xi = config.morlet_xi / scale;
    let envelope = |wr: f64, wc: f64| {
        let along = wr * dr + wc * dc;
        let perp = wr * er + wc * ec;
        (-0.5 * (s2 * along * along + across * perp * perp)).exp()
    };
    let gabor = sample_periodic(config.n, |wr, wc| envelope(wr - xi * dr, wc - xi * dc));
    let low = sample_periodic(config.n, envelope);
    let beta = gabor[0] / low[0];
    let values = gabor.iter().zip(&low).map(|(g, h)| g - beta * h).collect();
    Ok(to_filter(config.n, values))
}

/// Full-resolution isotropic Gaussian `φ̂_J`, normalized to unit DC gain.
///
/// The spatial standard deviation is `σ·2^(J-1)`, giving an averaging window
/// of about `2^J` pixels.
pub fn build_gaussian<T: Scalar>(config: &FilterBankConfig) -> Result<FourierFilter<T>> {
    config.validate()?;
    let s2 = (config.morlet_sigma * (1u64 << (config.j - 1)) as f64).powi(2);
    let raw = sample_periodic(config.n, |wr, wc| (-0.5 * s2 * (wr * wr + wc * wc)).exp());
    let dc = raw[0];
    let mut values: Vec<f64> = raw.into_iter().map(|v| v / dc).collect();
    values[0] = 1.0;
    Ok(to_filter(config.n, values))
}

/// Folds a full-resolution spectrum to resolution `r`: the average of its
/// `2^r × 2^r` spectral translates, i.e. the spectrum of the filter
/// decimated by `2^r` in space.
pub fn periodize<T: Scalar>(filter: &FourierFilter<T>, r: usize) -> Result<FourierFilter<T>> {
    if r >= usize::BITS as usize || (1usize << r) > filter.side {
        return invalid(format!(
            "cannot periodize a filter of side {} by 2^{r}",
            filter.side
        ));
    }
    let factor = 1usize << r;
    let n = filter.side;
    let m = n / factor;
    let mut out = vec![T::zero(); m * m];
    for p in 0..factor {
        for row in 0..m {
            let src = (row + p * m) * n;
            for q in 0..factor {
                for (o, &v) in out[row * m..row * m + m]
                    .iter_mut()
                    .zip(&filter.values[src + q * m..src + q * m + m])
                {
                    *o = *o + v;
                }
            }
        }
    }
    let scale = T::one() / T::of_usize(factor * factor);
    for v in out.iter_mut() {
        *v = *v * scale;
    }
    Ok(FourierFilter {
        resolution: filter.resolution + r,
        side: m,
        values: out,
    })
}

/// Rotates a square row-major array by `turns` quarter turns about index
/// `(0, 0)` on the torus: `out(v) = in(R⁻¹ v)` with `R(a, b) = (-b, a)`.
pub fn rotate_quarter_turns<C: Copy>(data: &[C], side: usize, turns: usize) -> Vec<C> {
    let mut cur = data.to_vec();
    for _ in 0..turns % 4 {
        let mut next = Vec::with_capacity(cur.len());
        for m in 0..side {
            let src_col = (side - m) % side;
            for n in 0..side {
                next.push(cur[n * side + src_col]);
            }
        }
        cur = next;
    }
    cur
}

/// Morlet wavelets and Gaussian low-pass at every resolution the cascade needs.
#[derive(Debug, Clone)]
pub struct FilterBank<T> {
    config: FilterBankConfig,
    /// `psi[j * L + t][r]`, resolutions `0..=j`.
    psi: Vec<Vec<FourierFilter<T>>>,
    /// resolutions `0..=J`
    phi: Vec<FourierFilter<T>>,
    psi_gain: f64,
}

impl<T: Scalar> FilterBank<T> {
    /// Builds the bank. Wavelets share one gain chosen so the
    /// Littlewood-Paley sum peaks at exactly 1.
    pub fn new(config: FilterBankConfig) -> Result<Self> {
        config.validate()?;
        let phi0: FourierFilter<f64> = build_gaussian(&config)?;
        let mut raw = Vec::with_capacity(config.j * config.l);
        for j in 0..config.j {
            for t in 0..config.l {
                raw.push(build_morlet::<f64>(j, t, &config)?);
            }
        }
        let psi_energy = symmetric_energy(&raw, config.n);
        let mut gain_sq = f64::INFINITY;
        for (p, phi) in psi_energy.iter().zip(phi0.values()) {
            if *p > 1e-300 {
                gain_sq = gain_sq.min((1.0 - phi * phi).max(0.0) / p);
            }
        }
        let psi_gain = if gain_sq.is_finite() { gain_sq.sqrt() } else { 1.0 };

        let cast = |f: &FourierFilter<f64>| FourierFilter {
            resolution: f.resolution,
            side: f.side,
            values: f.values.iter().map(|&v| T::of(v)).collect::<Vec<T>>(),
        };
        let phi0 = cast(&phi0);
        let phi = (0..=config.j)
            .map(|r| periodize(&phi0, r))
            .collect::<Result<Vec<_>>>()?;
        let psi = raw
            .iter()
            .enumerate()
            .map(|(idx, f)| {
                let full = cast(f).scaled(T::of(psi_gain));
                let j = idx / config.l;
                (0..=j).map(|r| periodize(&full, r)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            psi,
            phi,
            psi_gain,
        })
    }

    pub fn config(&self) -> &FilterBankConfig {
        &self.config
    }

    pub fn psi_gain(&self) -> f64 {
        self.psi_gain
    }

    pub fn wavelet_count(&self) -> usize {
        self.psi.len()
    }

    /// Wavelet `(j, t)` at resolution `r ≤ j`.
    pub fn psi(&self, j: usize, t: usize, r: usize) -> &FourierFilter<T> {
        &self.psi[j * self.config.l + t][r]
    }

    /// Wavelet `(j, t)` at any resolution `r ≤ J`; resolutions above `j` are
    /// folded on demand.
    pub fn psi_at(&self, j: usize, t: usize, r: usize) -> Result<Cow<'_, FourierFilter<T>>> {
        let stored = &self.psi[j * self.config.l + t];
        if r < stored.len() {
            Ok(Cow::Borrowed(&stored[r]))
        } else {
            periodize(&stored[0], r).map(Cow::Owned)
        }
    }

    /// All stored resolutions of wavelet `(j, t)`.
    pub fn psi_resolutions(&self, j: usize, t: usize) -> &[FourierFilter<T>] {
        &self.psi[j * self.config.l + t]
    }

    pub fn phi(&self, r: usize) -> &FourierFilter<T> {
        &self.phi[r]
    }

    pub fn phi_resolutions(&self) -> &[FourierFilter<T>] {
        &self.phi
    }

    /// Copy of the bank with every wavelet set to zero.
    pub fn without_wavelets(&self) -> Self {
        let mut out = self.clone();
        for set in out.psi.iter_mut() {
            for f in set.iter_mut() {
                f.values.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        out
    }
}

/// `½ Σ (|ψ̂(ω)|² + |ψ̂(−ω)|²)` over a set of full-resolution filters.
fn symmetric_energy<T: Scalar>(filters: &[FourierFilter<T>], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for f in filters {
        for r in 0..n {
            let nr = (n - r) % n;
            for c in 0..n {
                let nc = (n - c) % n;
                let a = f.get(r, c).to_f64_lossy();
                let b = f.get(nr, nc).to_f64_lossy();
                out[r * n + c] += 0.5 * (a * a + b * b);
            }
        }
    }
    out
}

/// Frequency-wise energy of `{A_J, W₁}` and its bounds inside a band.
#[derive(Debug, Clone)]
pub struct LittlewoodPaley {
    pub side: usize,
    pub curve: Vec<f64>,
    pub lp_min: f64,
    pub lp_max: f64,
}

/// Radius (Euclidean, radians) of the band where frame bounds are reported.
pub const DEFAULT_BAND_LIMIT: f64 = 7.0 * PI / 8.0;

/// Littlewood-Paley sum with bounds over `|ω| ≤` [`DEFAULT_BAND_LIMIT`].
pub fn littlewood_paley<T: Scalar>(bank: &FilterBank<T>) -> LittlewoodPaley {
    littlewood_paley_in(bank, 0.0, DEFAULT_BAND_LIMIT)
}

/// Littlewood-Paley sum with bounds over the annulus `lo ≤ |ω| ≤ hi`.
pub fn littlewood_paley_in<T: Scalar>(bank: &FilterBank<T>, lo: f64, hi: f64) -> LittlewoodPaley {
    let n = bank.config.n;
    let full: Vec<FourierFilter<T>> = bank.psi.iter().map(|set| set[0].clone()).collect();
    let mut curve = symmetric_energy(&full, n);
    for (c, p) in curve.iter_mut().zip(bank.phi[0].values()) {
        let p = p.to_f64_lossy();
        *c += p * p;
    }
    let (lp_min, lp_max) = band_bounds(&curve, n, lo, hi);
    LittlewoodPaley {
        side: n,
        curve,
        lp_min,
        lp_max,
    }
}

/// Min and max of a frequency-indexed array over `lo ≤ |ω| ≤ hi`.
pub fn band_bounds(curve: &[f64], n: usize, lo: f64, hi: f64) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for r in 0..n {
        let wr = frequency(r, n);
        for c in 0..n {
            let wc = frequency(c, n);
            let rad = (wr * wr + wc * wc).sqrt();
            if rad >= lo && rad <= hi {
                min = min.min(curve[r * n + c]);
                max = max.max(curve[r * n + c]);
            }
        }
    }
    (min, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{conv_subsample, dft2, idft2, ComplexImage};
    use num_complex::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_validation() {
        assert!(FilterBankConfig::new(2, 8, 32).validate().is_ok());
        assert!(FilterBankConfig::new(0, 8, 32).validate().is_err());
        assert!(FilterBankConfig::new(2, 0, 32).validate().is_err());
        assert!(FilterBankConfig::new(2, 8, 24).validate().is_err());
        assert!(FilterBankConfig::new(4, 8, 16).validate().is_err());
        let mut c = FilterBankConfig::default();
        c.morlet_xi = PI;
        assert!(c.validate().is_err());
        c.morlet_xi = 1.0;
        c.morlet_sigma = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn morlet_has_zero_mean() {
        let cfg = FilterBankConfig::new(2, 8, 32);
        for j in 0..2 {
            for t in 0..8 {
                let f: FourierFilter<f64> = build_morlet(j, t, &cfg).unwrap();
                assert!(f.get(0, 0).abs() <= 1e-6 * f.peak(), "j={j} t={t}");
            }
        }
    }

    #[test]
    fn morlet_index_errors() {
        let cfg = FilterBankConfig::new(2, 8, 32);
        assert!(build_morlet::<f64>(2, 0, &cfg).is_err());
        assert!(build_morlet::<f64>(0, 8, &cfg).is_err());
    }

    #[test]
    fn quarter_turn_of_morlet() {
        let cfg = FilterBankConfig::new(2, 4, 32);
        for j in 0..2 {
            let base: FourierFilter<f64> = build_morlet(j, 0, &cfg).unwrap();
            for turns in 1..4 {
                let rotated = build_morlet::<f64>(j, turns, &cfg).unwrap();
                let expect = rotate_quarter_turns(base.values(), 32, turns);
                let err = rotated
                    .values()
                    .iter()
                    .zip(&expect)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err <= 1e-10, "j={j} turns={turns} err={err}");
            }
        }
    }

    #[test]
    fn morlet_peak_location() {
        let mut cfg = FilterBankConfig::new(2, 8, 64);
        cfg.morlet_sigma = 0.8;
        cfg.morlet_xi = 3.0 * PI / 4.0;
        let f: FourierFilter<f64> = build_morlet(1, 0, &cfg).unwrap();
        let (mut best, mut at) = (0.0, (0, 0));
        for r in 0..64 {
            for c in 0..64 {
                if f.get(r, c).abs() > best {
                    best = f.get(r, c).abs();
                    at = (r, c);
                }
            }
        }
        // θ = 0 points along +col; ξ/2 = 3π/8 sits at bin 6 of 64
        let bin = 2.0 * PI / 64.0;
        assert!((frequency(at.0, 64)).abs() <= bin);
        assert!((frequency(at.1, 64) - 3.0 * PI / 8.0).abs() <= bin);
    }

    #[test]
    fn gaussian_unit_dc_preserves_constants() {
        let cfg = FilterBankConfig::new(2, 8, 32);
        let phi: FourierFilter<f64> = build_gaussian(&cfg).unwrap();
        assert_eq!(phi.get(0, 0), 1.0);
        let img = ComplexImage::from_real(32, &[0.7f64; 1024]).unwrap();
        let out = conv_subsample(&dft2(&img).unwrap(), &phi, 0).unwrap();
        assert!(out.data().iter().all(|v| (v.re - 0.7).abs() < 1e-10 && v.im.abs() < 1e-10));
    }

    fn spatial_std(cfg: &FilterBankConfig) -> f64 {
        let phi: FourierFilter<f64> = build_gaussian(cfg).unwrap();
        let n = cfg.n;
        let spec = ComplexImage::new(
            n,
            phi.values().iter().map(|&v| Complex::new(v, 0.0)).collect(),
        )
        .unwrap();
        let spatial = idft2(&spec).unwrap();
        let mut mass = 0.0;
        let mut second = 0.0;
        for r in 0..n {
            let dr = if r >= n / 2 { r as f64 - n as f64 } else { r as f64 };
            for c in 0..n {
                let w = spatial.get(r, c).re;
                mass += w;
                second += w * dr * dr;
            }
        }
        (second / mass).sqrt()
    }

    #[test]
    fn gaussian_width_doubles_per_scale() {
        let s2 = spatial_std(&FilterBankConfig::new(2, 8, 64));
        let s1 = spatial_std(&FilterBankConfig::new(1, 8, 64));
        assert!((s2 / (2.0 * s1) - 1.0).abs() < 0.05, "s1={s1} s2={s2}");
    }

    #[test]
    fn periodize_identity_and_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..256).map(|_| rng.random()).collect();
        let f = FourierFilter::new(0, 16, vals.clone()).unwrap();
        assert_eq!(periodize(&f, 0).unwrap().values(), &vals[..]);
        let ones = FourierFilter::new(0, 16, vec![1.0f64; 256]).unwrap();
        let p = periodize(&ones, 1).unwrap();
        assert_eq!(p.side(), 8);
        assert!(p.values().iter().all(|&v| v == 1.0));
        assert!(periodize(&ones, 5).is_err());
    }

    #[test]
    fn periodize_matches_spatial_decimation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec: Vec<Complex<f64>> = (0..256)
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let spatial = idft2(&ComplexImage::new(16, spec.clone()).unwrap()).unwrap();
        let decimated: Vec<Complex<f64>> = (0..8)
            .flat_map(|r| (0..8).map(move |c| (r, c)))
            .map(|(r, c)| spatial.get(2 * r, 2 * c))
            .collect();
        let expect = dft2(&ComplexImage::new(8, decimated).unwrap()).unwrap();
        // real and imaginary planes fold independently
        let re = FourierFilter::new(0, 16, spec.iter().map(|c| c.re).collect()).unwrap();
        let im = FourierFilter::new(0, 16, spec.iter().map(|c| c.im).collect()).unwrap();
        let pr = periodize(&re, 1).unwrap();
        let pi = periodize(&im, 1).unwrap();
        for i in 0..64 {
            let got = Complex::new(pr.values()[i], pi.values()[i]);
            assert!((got - expect.data()[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn bank_counts_and_invariants() {
        let bank = FilterBank::<f64>::new(FilterBankConfig::new(2, 8, 32)).unwrap();
        assert_eq!(bank.wavelet_count(), 16);
        assert_eq!(bank.phi_resolutions().len(), 3);
        assert_eq!(bank.phi(0).get(0, 0), 1.0);
        for j in 0..2 {
            for t in 0..8 {
                let set = bank.psi_resolutions(j, t);
                assert_eq!(set.len(), j + 1);
                for (r, f) in set.iter().enumerate() {
                    assert_eq!(f.resolution(), r);
                    assert_eq!(f.side(), 32 >> r);
                    let direct = periodize(&set[0], r).unwrap();
                    assert_eq!(direct.values(), f.values());
                }
                assert!(set[0].get(0, 0).abs() <= 1e-6 * set[0].peak());
            }
        }
        assert!(bank.psi_at(0, 3, 2).unwrap().side() == 8);
    }

    #[test]
    fn littlewood_paley_bounds() {
        let bank = FilterBank::<f64>::new(FilterBankConfig::new(2, 8, 32)).unwrap();
        let lp = littlewood_paley(&bank);
        assert!(lp.curve.iter().all(|&v| v >= 0.0));
        assert!(lp.lp_max <= 1.02, "lp_max={}", lp.lp_max);
        let annulus = littlewood_paley_in(&bank, PI / 8.0, 7.0 * PI / 8.0);
        assert!(annulus.lp_min >= 0.5, "lp_min={}", annulus.lp_min);
        let global = lp.curve.iter().cloned().fold(0.0, f64::max);
        assert!(global <= 1.05);
    }

    #[test]
    fn littlewood_paley_without_wavelets() {
        let bank = FilterBank::<f64>::new(FilterBankConfig::new(2, 8, 32)).unwrap();
        let lp = littlewood_paley(&bank.without_wavelets());
        for (c, p) in lp.curve.iter().zip(bank.phi(0).values()) {
            assert!((c - p * p).abs() < 1e-15);
        }
        assert_eq!(lp.curve[0], 1.0);
        assert_eq!(lp.curve.iter().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn f32_bank_builds() {
        let bank = FilterBank::<f32>::new(FilterBankConfig::new(2, 8, 32)).unwrap();
        assert_eq!(bank.phi(0).get(0, 0), 1.0f32);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn periodize_composes(seed in any::<u64>(), r1 in 0usize..3, r2 in 0usize..3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let vals: Vec<f64> = (0..64 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
                let f = FourierFilter::new(0, 64, vals).unwrap();
                let twice = periodize(&periodize(&f, r1).unwrap(), r2).unwrap();
                let once = periodize(&f, r1 + r2).unwrap();
                prop_assert_eq!(twice.resolution(), once.resolution());
                for (a, b) in twice.values().iter().zip(once.values()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
