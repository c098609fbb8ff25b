use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::loss::LossMode;
use crate::net::{Activation, OptimizerKind, TrainConfig};
use crate::noise::NoiseSpec;

fn default_test_per_class() -> usize {
    1000
}

fn default_train_subset() -> Option<usize> {
    Some(10_000)
}

/// Where examples come from. Test labels are always kept clean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
        #[serde(default = "default_test_per_class")]
        test_per_class: usize,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Seeded-shuffle subset of the training file; `None` keeps all of it.
        #[serde(default = "default_train_subset")]
        train_subset: Option<usize>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        class_count: Option<usize>,
    },
}

impl DataSource {
    /// MNIST files under `dir` using the standard file names.
    pub fn mnist(dir: &Path, train_subset: Option<usize>) -> Self {
        DataSource::Idx {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
            train_subset,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DataSource::Synthetic { .. } => "synthetic",
            DataSource::Idx { .. } => "idx",
            DataSource::Csv { .. } => "csv",
        }
    }

    fn paths(&self) -> Vec<&Path> {
        match self {
            DataSource::Synthetic { .. } => Vec::new(),
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => vec![train_images, train_labels, test_images, test_labels],
            DataSource::Csv { train, test, .. } => vec![train, test],
        }
    }
}

/// Which transition matrix feeds the corrected loss.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TSource {
    #[default]
    Truth,
    Estimate,
    File(PathBuf),
}

impl FromStr for TSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truth" => Ok(TSource::Truth),
            "estimate" => Ok(TSource::Estimate),
            other => match other.strip_prefix("file=") {
                Some(path) if !path.is_empty() => Ok(TSource::File(PathBuf::from(path))),
                _ => Err(Error::Config(format!(
                    "t_source must be truth, estimate or file=PATH, got `{other}`"
                ))),
            },
        }
    }
}

impl fmt::Display for TSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TSource::Truth => f.write_str("truth"),
            TSource::Estimate => f.write_str("estimate"),
            TSource::File(p) => write!(f, "file={}", p.display()),
        }
    }
}

impl Serialize for TSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            dropout: 0.0,
            activation: Activation::Relu,
        }
    }
}

impl NetworkConfig {
    pub fn layer_dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(&self.hidden);
        dims.push(classes);
        dims
    }
}

/// Everything one end-to-end run needs. The experiment `seed` drives every
/// random stream; the `seed` inside `train` is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Label used in sweep tables; defaults to the data source kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub data: DataSource,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub loss: LossMode,
    #[serde(default)]
    pub t_source: TSource,
    #[serde(default)]
    pub identity_mix: f64,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub train: TrainConfig,
    /// Stage-1 settings when estimating; defaults to `train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_train: Option<TrainConfig>,
    #[serde(default)]
    pub warm_start: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: None,
            data: DataSource::Synthetic {
                classes: 3,
                per_class: 2000,
                dim: 2,
                separation: 3.0,
                test_per_class: default_test_per_class(),
            },
            noise: NoiseSpec::identity(),
            loss: LossMode::Plain,
            t_source: TSource::Truth,
            identity_mix: 0.0,
            estimator: EstimatorConfig::default(),
            network: NetworkConfig {
                hidden: vec![32],
                ..NetworkConfig::default()
            },
            optimizer: OptimizerKind::default(),
            train: TrainConfig::default(),
            stage1_train: None,
            warm_start: false,
            seed: 0,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dataset_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.data.kind_name().to_string())
    }

    pub fn stage1(&self) -> &TrainConfig {
        self.stage1_train.as_ref().unwrap_or(&self.train)
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.data.paths() {
            if !p.is_file() {
                return Err(Error::Config(format!("missing file {}", p.display())));
            }
        }
        if let TSource::File(p) = &self.t_source {
            if !p.is_file() {
                return Err(Error::Config(format!("missing T file {}", p.display())));
            }
        }
        if let DataSource::Synthetic {
            classes,
            per_class,
            test_per_class,
            ..
        } = self.data
        {
            if classes < 2 || per_class == 0 || test_per_class == 0 {
                return Err(Error::Config("synthetic data needs ≥ 2 classes and samples".into()));
            }
            self.noise.validate(classes)?;
        }
        if !(0.0..1.0).contains(&self.identity_mix) {
            return Err(Error::Config(format!(
                "identity_mix {} outside [0, 1)",
                self.identity_mix
            )));
        }
        if !(0.0..1.0).contains(&self.network.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.network.dropout
            )));
        }
        if self.network.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer of width 0".into()));
        }
        self.estimator.validate()?;
        self.optimizer.validate()?;
        self.train.validate()?;
        self.stage1().validate()?;
        Ok(())
    }
}

/// Independent 64-bit seeds for each random stream of a run.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
