//! Dataset ingestion, the uniform small-sample subset protocol and crop/flip
//! augmentation.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{format_err, invalid, Result};
use crate::image::Image;
use crate::scalar::Scalar;
use crate::spectral::reflect_index;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CLASSES: usize = 10;
const CIFAR_PIXELS: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD: usize = 1 + CIFAR_PIXELS;

pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet<T> {
    pub images: Vec<Image<T>>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl<T: Scalar> LabeledImageSet<T> {
    pub fn new(images: Vec<Image<T>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return invalid(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return invalid(format!("label {bad} outside {class_count} classes"));
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Subset by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

/// Parses a CIFAR-10 binary batch: 3073-byte records of one label byte and
/// 3072 plane-major pixel bytes. Byte offsets in errors are relative to the
/// start of `bytes`.
pub fn parse_cifar_batch<T: Scalar>(bytes: &[u8]) -> Result<(Vec<Image<T>>, Vec<usize>)> {
    let whole = bytes.len() / CIFAR_RECORD;
    if bytes.len() % CIFAR_RECORD != 0 {
        let offset = (whole * CIFAR_RECORD) as u64;
        return format_err(
            offset,
            format!(
                "truncated record {whole}: {} of {CIFAR_RECORD} bytes present",
                bytes.len() - whole * CIFAR_RECORD
            ),
        );
    }
    let scale = T::one() / T::of(255.0);
    let mut images = Vec::with_capacity(whole);
    let mut labels = Vec::with_capacity(whole);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES {
            return format_err(
                (i * CIFAR_RECORD) as u64,
                format!("record {i} has label byte {label} > 9"),
            );
        }
        let data = rec[1..].iter().map(|&b| T::of_usize(b as usize) * scale).collect();
        images.push(Image::new(3, CIFAR_SIDE, CIFAR_SIDE, data)?);
        labels.push(label);
    }
    Ok((images, labels))
}

fn load_cifar_files<T: Scalar>(dir: &Path, files: &[&str]) -> Result<LabeledImageSet<T>> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for name in files {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| {
            std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
        })?;
        let (imgs, labs) = parse_cifar_batch(&bytes).map_err(|e| match e {
            crate::Error::Format { offset, msg } => crate::Error::Format {
                offset,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })?;
        images.extend(imgs);
        labels.extend(labs);
    }
    LabeledImageSet::new(images, labels, CIFAR_CLASSES)
}

/// Loads the five training batches and the test batch from a
/// `cifar-10-batches-bin` directory.
pub fn load_cifar10<T: Scalar>(dir: &Path) -> Result<(LabeledImageSet<T>, LabeledImageSet<T>)> {
    let train = load_cifar_files(dir, &CIFAR_TRAIN_FILES)?;
    let test = load_cifar_files(dir, &[CIFAR_TEST_FILE])?;
    Ok((train, test))
}

/// Serializes 3×32×32 images in the CIFAR-10 binary record format. Pixels
/// are rounded to the nearest of 256 levels.
pub fn write_cifar_batch<T: Scalar>(set: &LabeledImageSet<T>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(set.len() * CIFAR_RECORD);
    for (img, &label) in set.images.iter().zip(&set.labels) {
        if img.channels() != 3 || img.height() != CIFAR_SIDE || img.width() != CIFAR_SIDE {
            return invalid("CIFAR records hold 3x32x32 images");
        }
        if label >= CIFAR_CLASSES {
            return invalid(format!("label {label} does not fit a CIFAR-10 record"));
        }
        out.push(label as u8);
        out.extend(img.data().iter().map(|&v| quantize(v)));
    }
    fs::write(path, out)?;
    Ok(())
}

fn quantize<T: Scalar>(v: T) -> u8 {
    (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Reads a binary P6 PPM with maxval 255 into a `3 × H × W` image in `[0, 1]`.
pub fn load_ppm<T: Scalar>(path: &Path) -> Result<Image<T>> {
    parse_ppm(&fs::read(path)?)
}

pub fn parse_ppm<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return format_err(pos as u64, "unexpected end of PPM header");
        }
        fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if fields[0].1 != "P6" {
        return format_err(0, format!("magic {:?} is not P6", fields[0].1));
    }
    let number = |i: usize| -> Result<usize> {
        fields[i]
            .1
            .parse::<usize>()
            .or_else(|_| format_err(fields[i].0 as u64, format!("bad PPM header field {:?}", fields[i].1)))
    };
    let (width, height, maxval) = (number(1)?, number(2)?, number(3)?);
    if maxval != 255 {
        return format_err(fields[3].0 as u64, format!("maxval {maxval} is not 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = 3 * width * height;
    if bytes.len() < pos + need {
        return format_err(
            bytes.len() as u64,
            format!("raster truncated: {} of {need} bytes", bytes.len().saturating_sub(pos)),
        );
    }
    let raster = &bytes[pos..pos + need];
    let scale = T::one() / T::of(255.0);
    let mut data = vec![T::zero(); need];
    for (i, px) in raster.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * width * height + i] = T::of_usize(px[c] as usize) * scale;
        }
    }
    Image::new(3, height, width, data)
}

/// Writes a `3 × H × W` image as binary P6 with 8-bit quantization.
pub fn write_ppm<T: Scalar>(image: &Image<T>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_ppm(image)?)?;
    Ok(())
}

pub fn encode_ppm<T: Scalar>(image: &Image<T>) -> Result<Vec<u8>> {
    if image.channels() != 3 {
        return invalid("PPM needs a 3-channel image");
    }
    let (h, w) = (image.height(), image.width());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..h * w {
        for c in 0..3 {
            out.push(quantize(image.plane(c)[i]));
        }
    }
    Ok(out)
}

/// Draws exactly `per_class` samples of every class without replacement.
/// The result keeps the original relative order of the chosen samples.
pub fn sample_subset<T: Scalar>(
    set: &LabeledImageSet<T>,
    per_class: usize,
    seed: u64,
) -> Result<LabeledImageSet<T>> {
    let mut by_class = vec![Vec::new(); set.class_count];
    for (i, &l) in set.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < per_class) {
        return invalid(format!(
            "class {c} has {} samples, fewer than the {per_class} requested",
            members.len()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(per_class * set.class_count);
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..per_class]);
    }
    chosen.sort_unstable();
    Ok(set.select(&chosen))
}

/// One crop/flip draw: offsets into the padded image and the flip flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropFlip {
    pub top: usize,
    pub left: usize,
    pub flip: bool,
}

impl CropFlip {
    pub fn identity(padding: usize) -> Self {
        Self {
            top: padding,
            left: padding,
            flip: false,
        }
    }

    pub fn draw(padding: usize, allow_flip: bool, rng: &mut impl Rng) -> Self {
        let top = rng.random_range(0..=2 * padding);
        let left = rng.random_range(0..=2 * padding);
        let flip = allow_flip && rng.random_bool(0.5);
        Self { top, left, flip }
    }
}

/// Reflection-pads every plane by `padding`, crops the original size at the
/// draw's offset and optionally mirrors horizontally.
pub fn augment_with<T: Copy>(image: &Image<T>, padding: usize, draw: CropFlip) -> Image<T> {
    let (h, w) = (image.height(), image.width());
    let mut data = Vec::with_capacity(image.data().len());
    for c in 0..image.channels() {
        let plane = image.plane(c);
        for r in 0..h {
            let sr = reflect_index(r as isize + draw.top as isize - padding as isize, h);
            for col in 0..w {
                let cc = if draw.flip { w - 1 - col } else { col };
                let sc = reflect_index(cc as isize + draw.left as isize - padding as isize, w);
                data.push(plane[sr * w + sc]);
            }
        }
    }
    Image::new(image.channels(), h, w, data).expect("augmentation preserves shape")
}

/// Random pad-crop plus horizontal flip with probability ½.
pub fn augment<T: Copy>(image: &Image<T>, padding: usize, allow_flip: bool, rng: &mut impl Rng) -> Image<T> {
    augment_with(image, padding, CropFlip::draw(padding, allow_flip, rng))
}

/// Independent seed for stream `(tag, a, b)` of a master seed (SplitMix64
/// finalizer over the mixed words).
pub fn derive_seed(master: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut z = master;
    for w in [tag, a, b] {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(w.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..CIFAR_PIXELS).map(fill));
        r
    }

    #[test]
    fn parses_records() {
        let mut bytes = record(3, |i| (i % 256) as u8);
        bytes.extend(record(9, |_| 255));
        let (imgs, labels) = parse_cifar_batch::<f32>(&bytes).unwrap();
        assert_eq!(labels, vec![3, 9]);
        assert_eq!(imgs[0].get(0, 0, 1), 1.0 / 255.0);
        // plane-major: byte 1 + 1024 is the first green pixel
        assert_eq!(imgs[0].get(1, 0, 0), 0.0);
        assert_eq!(imgs[0].get(1, 0, 1), 1.0 / 255.0);
        assert!(imgs[1].data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn full_batch_shape() {
        let bytes: Vec<u8> = (0..10000).flat_map(|i| record((i % 10) as u8, |_| 7)).collect();
        let (imgs, labels) = parse_cifar_batch::<f32>(&bytes).unwrap();
        assert_eq!(imgs.len(), 10000);
        assert_eq!(labels.len(), 10000);
        assert_eq!((imgs[0].channels(), imgs[0].height(), imgs[0].width()), (3, 32, 32));
    }

    #[test]
    fn truncated_and_bad_label() {
        match parse_cifar_batch::<f32>(&vec![0u8; 3072]) {
            Err(crate::Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut bytes = record(1, |_| 0);
        bytes.extend(record(10, |_| 0));
        match parse_cifar_batch::<f32>(&bytes) {
            Err(crate::Error::Format { offset, .. }) => assert_eq!(offset, CIFAR_RECORD as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn ppm_pixels() {
        let white = b"P6\n1 1\n255\n\xff\xff\xff";
        let img = parse_ppm::<f64>(white).unwrap();
        assert_eq!(img.data(), &[1.0, 1.0, 1.0]);
        let rb = b"P6 2 1 255\n\xff\x00\x00\x00\x00\xff";
        let img = parse_ppm::<f64>(rb).unwrap();
        assert_eq!(img.plane(0), &[1.0, 0.0]);
        assert_eq!(img.plane(1), &[0.0, 0.0]);
        assert_eq!(img.plane(2), &[0.0, 1.0]);
        let commented = b"P6\n# made by hand\n1 1\n255\n\x00\x00\x00";
        assert!(parse_ppm::<f64>(commented).is_ok());
    }

    #[test]
    fn ppm_errors() {
        assert!(matches!(parse_ppm::<f64>(b"P3\n1 1\n255\n0 0 0"), Err(crate::Error::Format { .. })));
        assert!(matches!(parse_ppm::<f64>(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(crate::Error::Format { .. })));
        assert!(matches!(parse_ppm::<f64>(b"P6\n2 2\n255\n\0\0\0"), Err(crate::Error::Format { .. })));
    }

    #[test]
    fn ppm_round_trip_quantized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Image::new(3, 5, 7, (0..105).map(|_| rng.random::<f64>()).collect()).unwrap();
        let back = parse_ppm::<f64>(&encode_ppm(&img).unwrap()).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!(((a * 255.0).round() / 255.0 - b).abs() < 1e-12);
        }
    }

    fn labeled(n_per: usize, classes: usize) -> LabeledImageSet<f32> {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per * classes {
            images.push(Image::filled(1, 2, 2, i as f32));
            labels.push(i % classes);
        }
        LabeledImageSet::new(images, labels, classes).unwrap()
    }

    #[test]
    fn subset_is_uniform_and_deterministic() {
        let set = labeled(30, 10);
        let sub = sample_subset(&set, 7, 11).unwrap();
        assert_eq!(sub.len(), 70);
        assert!(sub.class_histogram().iter().all(|&c| c == 7));
        assert_eq!(sub, sample_subset(&set, 7, 11).unwrap());
        assert_ne!(sub, sample_subset(&set, 7, 12).unwrap());
        assert!(sample_subset(&set, 0, 1).unwrap().is_empty());
        assert!(sample_subset(&set, 31, 1).is_err());
        // no duplicates
        let mut ids: Vec<i64> = sub.images.iter().map(|i| i.data()[0] as i64).collect();
        ids.dedup();
        assert_eq!(ids.len(), 70);
    }

    #[test]
    fn augment_identity_and_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = Image::new(3, 8, 8, (0..192).map(|_| rng.random::<f32>()).collect()).unwrap();
        assert_eq!(augment_with(&img, 4, CropFlip::identity(4)), img);
        let draw = CropFlip { top: 1, left: 6, flip: true };
        let once = augment_with(&img, 4, draw);
        let twice = augment_with(&once, 4, CropFlip { flip: true, ..CropFlip::identity(4) });
        assert_eq!(twice, augment_with(&img, 4, CropFlip { flip: false, ..draw }));
        let centred_flip = CropFlip { flip: true, ..CropFlip::identity(4) };
        assert_eq!(augment_with(&augment_with(&img, 4, centred_flip), 4, centred_flip), img);
    }

    #[test]
    fn augment_pixels_come_from_padded_image() {
        use std::collections::HashMap;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = Image::new(3, 6, 6, (0..108).map(|i| i as u32).collect()).unwrap();
        let pad = 4isize;
        for _ in 0..50 {
            let out = augment(&img, 4, true, &mut rng);
            for c in 0..3 {
                let mut padded: HashMap<u32, i32> = HashMap::new();
                for r in -pad..6 + pad {
                    for col in -pad..6 + pad {
                        let v = img.get(c, reflect_index(r, 6), reflect_index(col, 6));
                        *padded.entry(v).or_default() += 1;
                    }
                }
                for v in out.plane(c) {
                    let n = padded.get_mut(v).expect("pixel present in padded image");
                    *n -= 1;
                    assert!(*n >= 0, "pixel {v} used more often than available");
                }
            }
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 2, 3, 4);
        assert_eq!(a, derive_seed(1, 2, 3, 4));
        assert_ne!(a, derive_seed(1, 2, 3, 5));
        assert_ne!(a, derive_seed(2, 2, 3, 4));
    }
}
