//! Binary container: an 8-byte little-endian header length, a JSON header
//! with sorted keys, then little-endian `f32` arrays back to back.
//!
//! The header holds `kind`, free-form `meta` and an `arrays` table whose
//! entries give each array's `name`, `shape`, byte `offset` into the
//! payload and element `count`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::encoder::{BatchNormState, Block, DenseLayer, ModelSpec, SleModel, Standardizer};
use crate::error::{format_err, invalid, Error, Result};
use crate::filterbank::{FilterBank, FilterBankConfig};
use crate::scalar::Scalar;
use crate::scattering::{ScatteringOutput, ScatteringPath};

pub const FORMAT: &str = "scatlearn-container";
pub const VERSION: u64 = 1;
const MAX_HEADER: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Map<String, Value>,
    entries: Vec<ArrayEntry>,
    payload: Vec<f32>,
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            meta: Map::new(),
            entries: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn set_meta(&mut self, key: &str, value: Value) {
        self.meta.insert(key.to_string(), value);
    }

    pub fn push<T: Scalar>(&mut self, name: &str, shape: &[usize], values: &[T]) -> Result<()> {
        let count: usize = shape.iter().product();
        if count != values.len() {
            return invalid(format!("array {name}: shape {shape:?} needs {count} values, got {}", values.len()));
        }
        if self.entries.iter().any(|e| e.name == name) {
            return invalid(format!("duplicate array name {name}"));
        }
        self.entries.push(ArrayEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: 4 * self.payload.len() as u64,
            count: count as u64,
        });
        self.payload.extend(values.iter().map(|v| v.to_f64_lossy() as f32));
        Ok(())
    }

    pub fn entries(&self) -> &[ArrayEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        let e = self.entries.iter().find(|e| e.name == name)?;
        let start = (e.offset / 4) as usize;
        Some((&e.shape, &self.payload[start..start + e.count as usize]))
    }

    /// Array converted to `T`, checking its shape.
    pub fn array<T: Scalar>(&self, name: &str, shape: &[usize]) -> Result<Vec<T>> {
        match self.get(name) {
            Some((s, v)) if s == shape => Ok(v.iter().map(|&x| T::of(x as f64)).collect()),
            Some((s, _)) => format_err(0, format!("array {name} has shape {s:?}, expected {shape:?}")),
            None => format_err(0, format!("missing array {name}")),
        }
    }

    pub fn header(&self) -> Value {
        json!({
            "format": FORMAT,
            "version": VERSION,
            "kind": self.kind,
            "meta": Value::Object(self.meta.clone()),
            "arrays": self.entries,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        // Value objects are key-sorted maps, so the header text is canonical.
        let header = serde_json::to_vec(&self.header())?;
        let mut out = Vec::with_capacity(8 + header.len() + 4 * self.payload.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return format_err(bytes.len() as u64, "file shorter than the 8-byte header length");
        }
        let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        if len > MAX_HEADER || 8 + len > bytes.len() as u64 {
            return format_err(0, format!("header length {len} exceeds file size {}", bytes.len()));
        }
        let header_end = 8 + len as usize;
        let header: Value =
            serde_json::from_slice(&bytes[8..header_end]).map_err(|e| Error::Format {
                offset: 8,
                msg: format!("header is not valid JSON: {e}"),
            })?;
        if header.get("format").and_then(Value::as_str) != Some(FORMAT) {
            return format_err(8, "not a scatlearn container");
        }
        if header.get("version").and_then(Value::as_u64) != Some(VERSION) {
            return format_err(8, "unsupported container version");
        }
        let kind = match header.get("kind").and_then(Value::as_str) {
            Some(k) => k.to_string(),
            None => return format_err(8, "header lacks kind"),
        };
        let meta = match header.get("meta") {
            Some(Value::Object(m)) => m.clone(),
            _ => return format_err(8, "header lacks meta object"),
        };
        let entries: Vec<ArrayEntry> = serde_json::from_value(header.get("arrays").cloned().unwrap_or(Value::Null))
            .map_err(|e| Error::Format {
                offset: 8,
                msg: format!("bad array table: {e}"),
            })?;
        let body = &bytes[header_end..];
        if body.len() % 4 != 0 {
            return format_err(header_end as u64, "payload is not a whole number of f32 values");
        }
        let payload: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        for e in &entries {
            let count: usize = e.shape.iter().product();
            let end = e.offset.checked_add(4 * e.count);
            if count as u64 != e.count || e.offset % 4 != 0 || end.is_none_or(|end| end > body.len() as u64) {
                return format_err(
                    header_end as u64 + e.offset,
                    format!("array {} does not fit the payload", e.name),
                );
            }
        }
        Ok(Self {
            kind,
            meta,
            entries,
            payload,
        })
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return format_err(8, format!("expected a {kind} container, found {}", self.kind));
        }
        Ok(())
    }

    fn meta_field<D: serde::de::DeserializeOwned>(&self, key: &str) -> Result<D> {
        let v = self.meta.get(key).cloned().unwrap_or(Value::Null);
        serde_json::from_value(v).map_err(|e| Error::Format {
            offset: 8,
            msg: format!("meta field {key}: {e}"),
        })
    }
}

pub const KIND_FILTER_BANK: &str = "filter_bank";
pub const KIND_SCATTERING: &str = "scattering";
pub const KIND_MODEL: &str = "model";

/// Every stored filter: `phi/r{r}` and `psi/j{j}/t{t}/r{r}`, real Fourier
/// values on a `side × side` grid.
pub fn bank_to_container<T: Scalar>(bank: &FilterBank<T>) -> Result<Container> {
    let cfg = *bank.config();
    let mut c = Container::new(KIND_FILTER_BANK);
    c.set_meta("bank", serde_json::to_value(cfg)?);
    c.set_meta("wavelet_count", json!(bank.wavelet_count()));
    c.set_meta("lowpass_count", json!(1));
    c.set_meta("psi_gain", json!(bank.psi_gain()));
    for f in bank.phi_resolutions() {
        c.push(&format!("phi/r{}", f.resolution()), &[f.side(), f.side()], f.values())?;
    }
    for j in 0..cfg.j {
        for t in 0..cfg.l {
            for f in bank.psi_resolutions(j, t) {
                c.push(&format!("psi/j{j}/t{t}/r{}", f.resolution()), &[f.side(), f.side()], f.values())?;
            }
        }
    }
    Ok(c)
}

pub fn bank_config_from_container(c: &Container) -> Result<FilterBankConfig> {
    c.expect_kind(KIND_FILTER_BANK)?;
    c.meta_field("bank")
}

/// Stacks same-shaped outputs into one `[records, colors, paths, rows, cols]`
/// array with the path table in the header.
pub fn scattering_to_container<T: Scalar>(outputs: &[ScatteringOutput<T>]) -> Result<Container> {
    let first = match outputs.first() {
        Some(f) => f,
        None => return invalid("no scattering outputs to store"),
    };
    let mut data = Vec::with_capacity(outputs.len() * first.data.len());
    for o in outputs {
        if o.paths != first.paths || o.colors != first.colors || o.rows != first.rows || o.cols != first.cols {
            return invalid("scattering outputs differ in shape");
        }
        data.extend_from_slice(&o.data);
    }
    let mut c = Container::new(KIND_SCATTERING);
    c.set_meta("paths", serde_json::to_value(&first.paths)?);
    c.set_meta("j", json!(first.j));
    c.push(
        "coefficients",
        &[outputs.len(), first.colors, first.paths.len(), first.rows, first.cols],
        &data,
    )?;
    Ok(c)
}

pub fn scattering_from_container<T: Scalar>(c: &Container) -> Result<Vec<ScatteringOutput<T>>> {
    c.expect_kind(KIND_SCATTERING)?;
    let paths: Vec<ScatteringPath> = c.meta_field("paths")?;
    let j: usize = c.meta_field("j")?;
    let shape = match c.get("coefficients") {
        Some((s, _)) if s.len() == 5 && s[2] == paths.len() => s.to_vec(),
        _ => return format_err(8, "missing or malformed coefficients array"),
    };
    let values: Vec<T> = c.array("coefficients", &shape)?;
    let per = shape[1..].iter().product::<usize>().max(1);
    Ok(values
        .chunks(per)
        .take(shape[0])
        .map(|chunk| ScatteringOutput {
            paths: paths.clone(),
            colors: shape[1],
            rows: shape[3],
            cols: shape[4],
            j,
            data: chunk.to_vec(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    input_channels: usize,
    positions: usize,
    class_count: usize,
    spec: ModelSpec,
    standardized: bool,
    standardize_epsilon: f64,
    bn_epsilon: f64,
    bn_momentum: f64,
}

fn push_block<T: Scalar>(c: &mut Container, prefix: &str, b: &Block<T>) -> Result<()> {
    let (o, i) = b.dense.weights.dim();
    c.push(&format!("{prefix}/weights"), &[o, i], b.dense.weights.as_slice().expect("standard layout"))?;
    for (name, v) in [
        ("bias", &b.dense.bias),
        ("gamma", &b.norm.gamma),
        ("beta", &b.norm.beta),
        ("running_mean", &b.norm.running_mean),
        ("running_var", &b.norm.running_var),
    ] {
        c.push(&format!("{prefix}/{name}"), &[o], v.as_slice().expect("standard layout"))?;
    }
    Ok(())
}

fn read_dense<T: Scalar>(c: &Container, prefix: &str, inputs: usize, outputs: usize) -> Result<DenseLayer<T>> {
    Ok(DenseLayer {
        weights: Array2::from_shape_vec((outputs, inputs), c.array(&format!("{prefix}/weights"), &[outputs, inputs])?)
            .expect("shape checked"),
        bias: Array1::from(c.array::<T>(&format!("{prefix}/bias"), &[outputs])?),
    })
}

fn read_block<T: Scalar>(c: &Container, prefix: &str, inputs: usize, outputs: usize, meta: &ModelMeta) -> Result<Block<T>> {
    let v = |name: &str| -> Result<Array1<T>> { Ok(Array1::from(c.array::<T>(&format!("{prefix}/{name}"), &[outputs])?)) };
    Ok(Block {
        dense: read_dense(c, prefix, inputs, outputs)?,
        norm: BatchNormState {
            gamma: v("gamma")?,
            beta: v("beta")?,
            running_mean: v("running_mean")?,
            running_var: v("running_var")?,
            epsilon: T::of(meta.bn_epsilon),
            momentum: T::of(meta.bn_momentum),
        },
    })
}

/// Checkpoint with a layer table in the header.
pub fn model_to_container<T: Scalar>(model: &SleModel<T>) -> Result<Container> {
    let (bn_epsilon, bn_momentum) = model
        .local_layers
        .iter()
        .chain(&model.fc_layers)
        .next()
        .map(|b| (b.norm.epsilon.to_f64_lossy(), b.norm.momentum.to_f64_lossy()))
        .unwrap_or((crate::encoder::BN_EPSILON, crate::encoder::BN_MOMENTUM));
    let meta = ModelMeta {
        input_channels: model.input_channels,
        positions: model.positions,
        class_count: model.class_count,
        spec: model.spec(),
        standardized: model.standardizer.is_some(),
        standardize_epsilon: model
            .standardizer
            .as_ref()
            .map_or(crate::encoder::STANDARDIZE_EPSILON, |s| s.epsilon.to_f64_lossy()),
        bn_epsilon,
        bn_momentum,
    };
    let mut c = Container::new(KIND_MODEL);
    c.set_meta("model", serde_json::to_value(&meta)?);
    c.set_meta("parameter_count", json!(model.parameter_count()));
    if let Some(s) = &model.standardizer {
        let d = s.mean.len();
        c.push("standardizer/mean", &[d], s.mean.as_slice().expect("standard layout"))?;
        c.push("standardizer/var", &[d], s.var.as_slice().expect("standard layout"))?;
    }
    for (i, b) in model.local_layers.iter().enumerate() {
        push_block(&mut c, &format!("local/{i}"), b)?;
    }
    for (i, b) in model.fc_layers.iter().enumerate() {
        push_block(&mut c, &format!("fc/{i}"), b)?;
    }
    let (o, i) = model.head.weights.dim();
    c.push("head/weights", &[o, i], model.head.weights.as_slice().expect("standard layout"))?;
    c.push("head/bias", &[o], model.head.bias.as_slice().expect("standard layout"))?;
    Ok(c)
}

pub fn model_from_container<T: Scalar>(c: &Container) -> Result<SleModel<T>> {
    c.expect_kind(KIND_MODEL)?;
    let meta: ModelMeta = c.meta_field("model")?;
    let mut model = SleModel::<T>::new(&meta.spec, meta.input_channels, meta.positions, meta.class_count, 0)
        .map_err(|e| Error::Format {
            offset: 8,
            msg: format!("model table: {e}"),
        })?;
    if meta.standardized {
        let d = model.input_width();
        model.standardizer = Some(Standardizer {
            mean: Array1::from(c.array::<T>("standardizer/mean", &[d])?),
            var: Array1::from(c.array::<T>("standardizer/var", &[d])?),
            epsilon: T::of(meta.standardize_epsilon),
        });
    }
    let mut width = meta.input_channels;
    for (i, &w) in meta.spec.local_widths.iter().enumerate() {
        model.local_layers[i] = read_block(c, &format!("local/{i}"), width, w, &meta)?;
        width = w;
    }
    width *= meta.positions;
    for (i, &w) in meta.spec.fc_widths.iter().enumerate() {
        model.fc_layers[i] = read_block(c, &format!("fc/{i}"), width, w, &meta)?;
        width = w;
    }
    model.head = read_dense(c, "head", width, meta.class_count)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::FilterBankConfig;
    use crate::image::Image;
    use crate::scattering::Scattering;

    #[test]
    fn bytes_round_trip_and_layout() {
        let mut c = Container::new("test");
        c.set_meta("z", json!(1));
        c.set_meta("a", json!("x"));
        c.push("v", &[2, 3], &[1.0f64, 2.0, 3.0, 4.0, 5.0, -6.5]).unwrap();
        c.push("w", &[1], &[0.25f32]).unwrap();
        assert!(c.push("w", &[1], &[0.0f32]).is_err());
        assert!(c.push("u", &[2], &[0.0f32]).is_err());
        let bytes = c.to_bytes().unwrap();
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[8..8 + len]).unwrap();
        assert!(header.find("\"a\"").unwrap() < header.find("\"z\"").unwrap());
        assert_eq!(bytes.len(), 8 + len + 4 * 7);
        assert_eq!(&bytes[8 + len..8 + len + 4], &1.0f32.to_le_bytes());
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.get("w").unwrap().1, &[0.25]);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let mut c = Container::new("t");
        c.push("v", &[4], &[1.0f32; 4]).unwrap();
        let bytes = c.to_bytes().unwrap();
        assert!(matches!(Container::from_bytes(&bytes[..5]), Err(Error::Format { .. })));
        assert!(matches!(Container::from_bytes(&bytes[..bytes.len() - 4]), Err(Error::Format { .. })));
        assert!(matches!(Container::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[8] = b'[';
        assert!(matches!(Container::from_bytes(&bad), Err(Error::Format { .. })));
        let mut huge = bytes;
        huge[..8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(Container::from_bytes(&huge), Err(Error::Format { .. })));
    }

    #[test]
    fn bank_file_counts() {
        let bank = FilterBank::<f64>::new(FilterBankConfig::default()).unwrap();
        let c = bank_to_container(&bank).unwrap();
        assert_eq!(c.meta["wavelet_count"], json!(16));
        let psi_names: std::collections::BTreeSet<String> = c
            .entries()
            .iter()
            .filter_map(|e| e.name.strip_prefix("psi/"))
            .map(|n| n.rsplit_once('/').unwrap().0.to_string())
            .collect();
        assert_eq!(psi_names.len(), 16);
        assert_eq!(c.entries().iter().filter(|e| e.name.starts_with("phi/")).count(), 3);
        let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(bank_config_from_container(&back).unwrap(), *bank.config());
        assert_eq!(c.to_bytes().unwrap(), bank_to_container(&bank).unwrap().to_bytes().unwrap());
    }

    #[test]
    fn scattering_round_trip() {
        let sc = Scattering::new(FilterBank::<f64>::new(FilterBankConfig::new(2, 4, 16)).unwrap()).unwrap();
        let imgs: Vec<_> = (0..3)
            .map(|i| Image::new(2, 16, 16, (0..512).map(|v| ((v * (i + 1)) % 7) as f64 / 7.0).collect()).unwrap())
            .collect();
        let outs = sc.transform_batch(&imgs).unwrap();
        let c = scattering_to_container(&outs).unwrap();
        assert_eq!(c.get("coefficients").unwrap().0, &[3, 2, outs[0].paths.len(), 4, 4]);
        let back: Vec<ScatteringOutput<f64>> =
            scattering_from_container(&Container::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&outs) {
            assert_eq!(a.paths, b.paths);
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn model_round_trip() {
        let spec = ModelSpec {
            local_widths: vec![4, 3],
            fc_widths: vec![5],
        };
        let mut m = SleModel::<f32>::new(&spec, 6, 4, 3, 2).unwrap();
        let x = Array2::from_shape_fn((5, 24), |(a, b)| ((a * 7 + b * 3) % 11) as f32 / 11.0);
        m.standardizer = Some(Standardizer::fit(&x.view()).unwrap());
        m.forward(&x.view(), crate::encoder::Mode::Train).unwrap();
        let c = model_to_container(&m).unwrap();
        let back: SleModel<f32> = model_from_container(&Container::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(model_from_container::<f32>(&bank_to_container(&FilterBank::<f32>::new(FilterBankConfig::default()).unwrap()).unwrap()).is_err());
    }
}
