use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scatlearn::encoder::{ModelSpec, TrainConfig};
use scatlearn::filterbank::FilterBankConfig;
use scatlearn::scattering::ScatteringOptions;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[default]
    Scattering,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Oriented-grating textures generated from the seed.
    #[default]
    Synthetic,
    Cifar10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatteringSection {
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "L")]
    pub l: usize,
    /// Padded side.
    #[serde(rename = "N")]
    pub n: usize,
    /// Morlet parameters; unset values follow the defaults for `L`.
    pub morlet_sigma: Option<f64>,
    pub morlet_xi: Option<f64>,
    pub morlet_slant: Option<f64>,
    pub oversampling: usize,
}

impl Default for ScatteringSection {
    fn default() -> Self {
        Self {
            j: 2,
            l: 8,
            n: 32,
            morlet_sigma: None,
            morlet_xi: None,
            morlet_slant: None,
            oversampling: 0,
        }
    }
}

impl ScatteringSection {
    pub fn bank(&self) -> FilterBankConfig {
        let base = FilterBankConfig::new(self.j, self.l, self.n);
        FilterBankConfig {
            morlet_sigma: self.morlet_sigma.unwrap_or(base.morlet_sigma),
            morlet_xi: self.morlet_xi.unwrap_or(base.morlet_xi),
            morlet_slant: self.morlet_slant.unwrap_or(base.morlet_slant),
            ..base
        }
    }

    pub fn options(&self) -> ScatteringOptions {
        ScatteringOptions {
            oversampling: self.oversampling,
            include_non_increasing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    pub cifar_dir: Option<PathBuf>,
    /// Training samples per class: a uniform subset for CIFAR-10 (all when
    /// unset), the generated count for synthetic data.
    pub train_per_class: Option<usize>,
    /// Test samples per class, same convention.
    pub test_per_class: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            cifar_dir: None,
            train_per_class: Some(100),
            test_per_class: Some(50),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    pub precision: Precision,
    pub features: FeatureKind,
    pub scattering: ScatteringSection,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub data: DataSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F32,
            features: FeatureKind::Scattering,
            scattering: ScatteringSection::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            data: DataSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies flag overrides and ties the training seed to the master seed.
    pub fn resolve(mut self, o: &Overrides, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.train.seed = self.seed;
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.precision, o.precision);
        set!(self.features, o.features);
        set!(self.scattering.j, o.j);
        set!(self.scattering.l, o.l);
        set!(self.scattering.n, o.n);
        set!(self.train.epochs, o.epochs);
        set!(self.train.batch_size, o.batch_size);
        set!(self.train.lr_initial, o.lr);
        if let Some(k) = o.train_per_class {
            self.data.train_per_class = Some(k);
        }
        if let Some(k) = o.test_per_class {
            self.data.test_per_class = Some(k);
        }
        if let Some(dir) = &o.cifar_dir {
            self.data.source = DataSource::Cifar10;
            self.data.cifar_dir = Some(dir.clone());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scattering.bank().validate().map_err(CliError::from)?;
        self.train.validate().map_err(CliError::from)?;
        if self.data.source == DataSource::Cifar10 && self.data.cifar_dir.is_none() {
            return Err(CliError::config("data.source is cifar10 but data.cifar_dir is unset"));
        }
        if self.data.train_per_class == Some(0) || self.data.test_per_class == Some(0) {
            return Err(CliError::config("per-class sample counts must be positive"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Flags that override config fields.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub precision: Option<Precision>,
    #[arg(long)]
    pub features: Option<FeatureKind>,
    /// Scale count J.
    #[arg(long = "J", short = 'J')]
    pub j: Option<usize>,
    /// Orientation count L.
    #[arg(long = "L", short = 'L')]
    pub l: Option<usize>,
    /// Padded side N.
    #[arg(long = "N", short = 'N')]
    pub n: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Use CIFAR-10 binary batches from this directory.
    #[arg(long)]
    pub cifar_dir: Option<PathBuf>,
}
