use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::image::Image;
use crate::scalar::Scalar;
use crate::scattering::Scattering;

/// Maps an image to a `channels × positions` feature map, channel-major.
pub trait FeatureExtractor<T: Scalar>: Sync {
    fn name(&self) -> &'static str;

    /// Returns `(channels, positions, values)`.
    fn extract(&self, image: &Image<T>) -> Result<(usize, usize, Vec<T>)>;
}

pub struct ScatteringFeatures<T: Scalar> {
    pub scattering: Scattering<T>,
}

impl<T: Scalar> ScatteringFeatures<T> {
    pub fn new(scattering: Scattering<T>) -> Self {
        Self { scattering }
    }
}

impl<T: Scalar> FeatureExtractor<T> for ScatteringFeatures<T> {
    fn name(&self) -> &'static str {
        "scattering"
    }

    fn extract(&self, image: &Image<T>) -> Result<(usize, usize, Vec<T>)> {
        let out = self.scattering.transform(image)?;
        Ok((out.channels(), out.positions(), out.data))
    }
}

/// Pixels as features: one channel per color, one position per pixel.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawPixels;

impl<T: Scalar> FeatureExtractor<T> for RawPixels {
    fn name(&self) -> &'static str {
        "raw"
    }

    fn extract(&self, image: &Image<T>) -> Result<(usize, usize, Vec<T>)> {
        Ok((
            image.channels(),
            image.height() * image.width(),
            image.data().to_vec(),
        ))
    }
}

/// Features of every image as rows of a matrix, in input order.
pub fn extract_all<T: Scalar, F: FeatureExtractor<T> + ?Sized>(
    extractor: &F,
    images: &[Image<T>],
) -> Result<(usize, usize, Array2<T>)> {
    if images.is_empty() {
        return invalid("no images to extract features from");
    }
    let maps: Vec<(usize, usize, Vec<T>)> = images
        .par_iter()
        .map(|img| extractor.extract(img))
        .collect::<Result<_>>()?;
    let (channels, positions) = (maps[0].0, maps[0].1);
    if maps.iter().any(|m| m.0 != channels || m.1 != positions) {
        return invalid("images produce feature maps of different shapes");
    }
    let width = channels * positions;
    let mut flat = Vec::with_capacity(images.len() * width);
    for (_, _, v) in maps {
        flat.extend(v);
    }
    let arr = Array2::from_shape_vec((images.len(), width), flat).expect("shape checked");
    Ok((channels, positions, arr))
}
