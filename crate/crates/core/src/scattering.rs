//! Order 0/1/2 scattering cascade.
//!
//! For each input channel:
//!
//! ```text
//! S0 = x ⋆ φ_J (2^J u)
//! S1 = |x ⋆ ψ_{j1,θ1}| ⋆ φ_J (2^J u)
//! S2 = ||x ⋆ ψ_{j1,θ1}| ⋆ ψ_{j2,θ2}| ⋆ φ_J (2^J u),   j1 < j2
//! ```
//!
//! Critical sampling subsamples the first modulus by `2^j1`, the second by
//! `2^(j2-j1)` and the final average by `2^(J-j2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::filterbank::FilterBank;
use crate::image::Image;
use crate::scalar::Scalar;
use crate::spectral::{conv_subsample_with, modulus, pad_reflect, unpad, ComplexImage, Dft2Plan, PadGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "order")]
pub enum ScatteringPath {
    #[serde(rename = "0")]
    Zeroth,
    #[serde(rename = "1")]
    First { j1: usize, theta1: usize },
    #[serde(rename = "2")]
    Second {
        j1: usize,
        theta1: usize,
        j2: usize,
        theta2: usize,
    },
}

impl ScatteringPath {
    pub fn order(&self) -> usize {
        match self {
            ScatteringPath::Zeroth => 0,
            ScatteringPath::First { .. } => 1,
            ScatteringPath::Second { .. } => 2,
        }
    }

    /// Same path with every angle advanced by `steps` (mod `l`).
    pub fn rotated(&self, steps: usize, l: usize) -> Self {
        match *self {
            ScatteringPath::Zeroth => ScatteringPath::Zeroth,
            ScatteringPath::First { j1, theta1 } => ScatteringPath::First {
                j1,
                theta1: (theta1 + steps) % l,
            },
            ScatteringPath::Second {
                j1,
                theta1,
                j2,
                theta2,
            } => ScatteringPath::Second {
                j1,
                theta1: (theta1 + steps) % l,
                j2,
                theta2: (theta2 + steps) % l,
            },
        }
    }
}

/// Canonical path order: order 0, then order 1 by `(j1, θ1)`, then order 2
/// by `(j1, j2, θ1, θ2)` with `j1 < j2`.
pub fn enumerate_paths(j: usize, l: usize) -> Vec<ScatteringPath> {
    enumerate(j, l, false)
}

/// Like [`enumerate_paths`] but with every `(j1, j2)` pair in the second
/// order, including non-increasing ones.
pub fn enumerate_paths_all(j: usize, l: usize) -> Vec<ScatteringPath> {
    enumerate(j, l, true)
}

fn enumerate(j: usize, l: usize, all_pairs: bool) -> Vec<ScatteringPath> {
    let mut paths = vec![ScatteringPath::Zeroth];
    for j1 in 0..j {
        for theta1 in 0..l {
            paths.push(ScatteringPath::First { j1, theta1 });
        }
    }
    for j1 in 0..j {
        for j2 in 0..j {
            if j2 <= j1 && !all_pairs {
                continue;
            }
            for theta1 in 0..l {
                for theta2 in 0..l {
                    paths.push(ScatteringPath::Second {
                        j1,
                        theta1,
                        j2,
                        theta2,
                    });
                }
            }
        }
    }
    paths
}

/// Paths per input channel: `1 + JL + J(J-1)L²/2`.
pub fn path_count(j: usize, l: usize) -> usize {
    1 + j * l + j * j.saturating_sub(1) / 2 * l * l
}

/// Output channels for a `colors`-channel input.
pub fn channel_count(j: usize, l: usize, colors: usize) -> usize {
    colors * path_count(j, l)
}

/// Scattering coefficients laid out `(color, path, row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringOutput<T> {
    pub paths: Vec<ScatteringPath>,
    pub colors: usize,
    pub rows: usize,
    pub cols: usize,
    /// Subsampling exponent `J` of the output grid.
    pub j: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ScatteringOutput<T> {
    pub fn channels(&self) -> usize {
        self.colors * self.paths.len()
    }

    pub fn positions(&self) -> usize {
        self.rows * self.cols
    }

    /// Spatial map of one `(color, path)` channel.
    pub fn channel(&self, color: usize, path: usize) -> &[T] {
        let p = self.positions();
        let idx = color * self.paths.len() + path;
        &self.data[idx * p..(idx + 1) * p]
    }

    /// Squared norm with each coefficient weighted by the `4^J` area it
    /// represents, so it is comparable with the input's squared norm.
    pub fn energy(&self) -> f64 {
        let w = (1u64 << (2 * self.j)) as f64;
        w * self.data.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>()
    }

    /// Weighted squared distance, see [`ScatteringOutput::energy`].
    pub fn distance_sqr(&self, other: &Self) -> f64 {
        let w = (1u64 << (2 * self.j)) as f64;
        w * self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2))
            .sum::<f64>()
    }

    /// Energy restricted to paths of one order.
    pub fn order_energy(&self, order: usize) -> f64 {
        let w = (1u64 << (2 * self.j)) as f64;
        let mut acc = 0.0;
        for c in 0..self.colors {
            for (p, path) in self.paths.iter().enumerate() {
                if path.order() == order {
                    acc += self.channel(c, p).iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>();
                }
            }
        }
        w * acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScatteringOptions {
    /// Subsample each stage by `2^oversampling` less than critical.
    pub oversampling: usize,
    /// Diagnostic mode: also compute non-increasing second-order paths.
    pub include_non_increasing: bool,
}

/// Filter bank plus FFT plans for every resolution.
#[derive(Debug, Clone)]
pub struct Scattering<T: Scalar> {
    bank: FilterBank<T>,
    plans: Vec<Dft2Plan<T>>,
    options: ScatteringOptions,
    paths: Vec<ScatteringPath>,
}

impl<T: Scalar> Scattering<T> {
    pub fn new(bank: FilterBank<T>) -> Result<Self> {
        Self::with_options(bank, ScatteringOptions::default())
    }

    pub fn with_options(bank: FilterBank<T>, options: ScatteringOptions) -> Result<Self> {
        let cfg = *bank.config();
        let plans = (0..=cfg.j)
            .map(|r| Dft2Plan::new(cfg.n >> r))
            .collect::<Result<Vec<_>>>()?;
        let paths = if options.include_non_increasing {
            enumerate_paths_all(cfg.j, cfg.l)
        } else {
            enumerate_paths(cfg.j, cfg.l)
        };
        Ok(Self {
            bank,
            plans,
            options,
            paths,
        })
    }

    pub fn bank(&self) -> &FilterBank<T> {
        &self.bank
    }

    pub fn paths(&self) -> &[ScatteringPath] {
        &self.paths
    }

    pub fn options(&self) -> ScatteringOptions {
        self.options
    }

    /// Scattering transform of a `colors × H × W` image, each channel
    /// independently.
    pub fn transform(&self, image: &Image<T>) -> Result<ScatteringOutput<T>> {
        let cfg = self.bank.config();
        let geom = PadGeometry::new(image.height(), image.width(), cfg.n).map_err(|e| {
            crate::Error::InvalidArgument(format!(
                "image {}x{} cannot be scattered with bank side {}: {e}",
                image.height(),
                image.width(),
                cfg.n
            ))
        })?;
        let (_, rows, _, cols) = geom.output_window(cfg.j);
        let mut data = Vec::with_capacity(image.channels() * self.paths.len() * rows * cols);
        for c in 0..image.channels() {
            let padded = pad_reflect(image.plane(c), &geom)?;
            for grid in self.transform_plane(padded)? {
                let (_, _, cropped) = unpad(&grid, cfg.n >> cfg.j, &geom, cfg.j)?;
                data.extend(cropped);
            }
        }
        Ok(ScatteringOutput {
            paths: self.paths.clone(),
            colors: image.channels(),
            rows,
            cols,
            j: cfg.j,
            data,
        })
    }

    /// Transforms a batch in parallel on the current rayon pool; output order
    /// follows input order.
    pub fn transform_batch(&self, images: &[Image<T>]) -> Result<Vec<ScatteringOutput<T>>> {
        images.par_iter().map(|img| self.transform(img)).collect()
    }

    fn spectrum(&self, mut img: ComplexImage<T>, res: usize) -> Result<ComplexImage<T>> {
        self.plans[res].forward(&mut img)?;
        Ok(img)
    }

    /// Output grids (side `N/2^J`, uncropped) in path order for one padded plane.
    fn transform_plane(&self, padded: ComplexImage<T>) -> Result<Vec<Vec<T>>> {
        let cfg = self.bank.config();
        let big_j = cfg.j;
        let os = self.options.oversampling;
        let x_hat = self.spectrum(padded, 0)?;

        // order 0
        let mut s0 = None;
        let mut s1 = vec![Vec::new(); big_j * cfg.l];
        let mut s2 = std::collections::BTreeMap::new();

        s0.replace(self.average(&x_hat, 0, false)?);

        for j1 in 0..big_j {
            let r1 = j1.saturating_sub(os);
            for t1 in 0..cfg.l {
                let w1 = conv_subsample_with(&x_hat, self.bank.psi(j1, t1, 0), r1, &self.plans[r1])?;
                let u1_hat = self.spectrum(modulus(&w1), r1)?;
                s1[j1 * cfg.l + t1] = self.average(&u1_hat, r1, true)?;

                for j2 in 0..big_j {
                    if j2 <= j1 && !self.options.include_non_increasing {
                        continue;
                    }
                    let r2 = j2.saturating_sub(os).max(r1);
                    for t2 in 0..cfg.l {
                        let psi2 = self.bank.psi_at(j2, t2, r1)?;
                        let w2 = conv_subsample_with(&u1_hat, &psi2, r2 - r1, &self.plans[r2])?;
                        let u2_hat = self.spectrum(modulus(&w2), r2)?;
                        s2.insert((j1, j2, t1, t2), self.average(&u2_hat, r2, true)?);
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(self.paths.len());
        for path in &self.paths {
            let grid = match *path {
                ScatteringPath::Zeroth => s0.take().expect("order 0 computed once"),
                ScatteringPath::First { j1, theta1 } => std::mem::take(&mut s1[j1 * cfg.l + theta1]),
                ScatteringPath::Second {
                    j1,
                    theta1,
                    j2,
                    theta2,
                } => s2
                    .remove(&(j1, j2, theta1, theta2))
                    .expect("every enumerated second-order path computed"),
            };
            out.push(grid);
        }
        Ok(out)
    }

    /// `φ_J` averaging of a spectrum at resolution `res`, subsampled to `2^J`.
    /// Averages of a modulus are nonnegative up to FFT rounding, which
    /// `nonnegative` clamps away.
    fn average(&self, spectrum: &ComplexImage<T>, res: usize, nonnegative: bool) -> Result<Vec<T>> {
        let big_j = self.bank.config().j;
        let out = conv_subsample_with(spectrum, self.bank.phi(res), big_j - res, &self.plans[big_j])?;
        let mut re = out.re();
        if nonnegative {
            re.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        Ok(re)
    }
}

/// One-shot transform with a freshly planned engine.
pub fn scattering2d<T: Scalar>(image: &Image<T>, bank: &FilterBank<T>) -> Result<ScatteringOutput<T>> {
    Scattering::new(bank.clone())?.transform(image)
}

/// Validates that an image fits a bank without computing anything.
pub fn check_fits<T: Scalar>(image: &Image<T>, bank: &FilterBank<T>) -> Result<()> {
    let n = bank.config().n;
    if image.height() > n || image.width() > n {
        return invalid(format!(
            "image {}x{} larger than bank side {n}",
            image.height(),
            image.width()
        ));
    }
    Ok(())
}
