//! Scattering transforms of images, a shared local encoder trained on them,
//! and angular Fourier analysis of the learned first layer.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod analysis;
pub mod container;
pub mod data;
pub mod encoder;
pub mod error;
pub mod filterbank;
pub mod image;
pub mod scalar;
pub mod scattering;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type FilterBank32 = filterbank::FilterBank<f32>;
pub type FilterBank64 = filterbank::FilterBank<f64>;
pub type Scattering32 = scattering::Scattering<f32>;
pub type Scattering64 = scattering::Scattering<f64>;
pub type ScatteringOutput32 = scattering::ScatteringOutput<f32>;
pub type ScatteringOutput64 = scattering::ScatteringOutput<f64>;
pub type SleModel32 = encoder::SleModel<f32>;
pub type SleModel64 = encoder::SleModel<f64>;
pub type LabeledImageSet32 = data::LabeledImageSet<f32>;
pub type LabeledImageSet64 = data::LabeledImageSet<f64>;
