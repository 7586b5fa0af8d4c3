//! Run configuration: a TOML file with dotted keys, overlaid by
//! command-line flags.
//!
//! ```toml
//! [technology]
//! name = "TaOx"
//!
//! [nonideal]
//! rs_ratio = 0.0027
//! rneu_ratio = 0.00067
//! k_sigma = -2
//!
//! [aware]
//! epochs = 4
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::Value;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::experiments::{SweepSpec, VariationProtocol};
use crate::tech::{Discretization, NonIdealityConfig, TechnologyProfile, DEFAULT_CLIP_PERCENTILE};
use crate::train::{Mode, TrainConfig};

/// Every key accepted in a configuration file.
pub const VALID_KEYS: &[&str] = &[
    "technology.name",
    "technology.r_on_ohm",
    "technology.r_off_ohm",
    "technology.r_low_ohm",
    "technology.r_high_ohm",
    "nonideal.rs_ratio",
    "nonideal.rneu_ratio",
    "nonideal.rs_ohm",
    "nonideal.rneu_ohm",
    "nonideal.k_sigma",
    "nonideal.sigma_unit",
    "network.layer_dims",
    "train.mode",
    "train.seed",
    "train.clip_percentile",
    "train.discretization",
    "train.tiling",
    "ideal.epochs",
    "ideal.batch_size",
    "ideal.learning_rate",
    "aware.epochs",
    "aware.batch_size",
    "aware.learning_rate",
    "aware.warm_start",
    "data.dir",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "data.train_limit",
    "data.test_limit",
    "sweep.rs_ratios",
    "sweep.rneu_ratios",
    "sweep.k_sigmas",
    "sweep.tile_sizes",
    "sweep.repetitions",
    "sweep.modes",
    "sweep.protocol",
    "sweep.baseline",
    "validate.n_images",
    "validate.layer",
    "validate.rs_ratios",
    "validate.rneu_ratios",
    "validate.histogram_bins",
];

/// Optimizer settings of one training mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Hyper {
    fn defaults(mode: Mode) -> Self {
        let t = match mode {
            Mode::Ideal => TrainConfig::ideal(),
            Mode::Aware => TrainConfig::aware(NonIdealityConfig::ideal()),
        };
        Hyper { epochs: t.epochs, batch_size: t.batch_size, learning_rate: t.learning_rate }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataPaths {
    pub dir: PathBuf,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Use only the first `n` items of each split.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl DataPaths {
    fn resolve(&self, explicit: &Option<PathBuf>, canonical: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.dir.join(canonical))
    }

    pub fn train(&self) -> Result<Dataset> {
        let ds = Dataset::load(
            self.resolve(&self.train_images, "train-images-idx3-ubyte"),
            self.resolve(&self.train_labels, "train-labels-idx1-ubyte"),
            Split::Train,
        )?;
        Ok(self.train_limit.map_or(ds.clone(), |n| ds.head(n)))
    }

    pub fn test(&self) -> Result<Dataset> {
        let ds = Dataset::load(
            self.resolve(&self.test_images, "t10k-images-idx3-ubyte"),
            self.resolve(&self.test_labels, "t10k-labels-idx1-ubyte"),
            Split::Test,
        )?;
        Ok(self.test_limit.map_or(ds.clone(), |n| ds.head(n)))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateSpec {
    pub n_images: usize,
    pub layer: usize,
    pub rs_ratios: Vec<f64>,
    pub rneu_ratios: Vec<f64>,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub technology: TechnologyProfile,
    pub nonideal: NonIdealityConfig,
    pub layer_dims: Vec<usize>,
    pub mode: Mode,
    pub seed: u64,
    pub clip_percentile: f64,
    pub discretization: Discretization,
    pub tiling: Option<Vec<(usize, usize)>>,
    pub ideal: Hyper,
    pub aware: Hyper,
    pub warm_start: Option<PathBuf>,
    pub data: DataPaths,
    pub sweep: SweepSpec,
    pub sweep_baseline: Option<PathBuf>,
    pub validate: ValidateSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            technology: TechnologyProfile::preset("TiO2").expect("built-in preset"),
            nonideal: NonIdealityConfig::ideal(),
            layer_dims: vec![784, 500, 10],
            mode: Mode::Ideal,
            seed: 1,
            clip_percentile: DEFAULT_CLIP_PERCENTILE,
            discretization: Discretization::FourBit,
            tiling: None,
            ideal: Hyper::defaults(Mode::Ideal),
            aware: Hyper::defaults(Mode::Aware),
            warm_start: None,
            data: DataPaths {
                dir: PathBuf::from("data/mnist"),
                train_images: None,
                train_labels: None,
                test_images: None,
                test_labels: None,
                train_limit: None,
                test_limit: None,
            },
            sweep: SweepSpec {
                rs_ratios: vec![0.00067, 0.0013, 0.0027],
                rneu_ratios: vec![0.0, 0.00033, 0.00067],
                k_sigmas: vec![0],
                tile_sizes: vec![(784, 500)],
                repetitions: 3,
                modes: vec![Mode::Ideal],
                protocol: VariationProtocol::PerCorner,
            },
            sweep_baseline: None,
            validate: ValidateSpec {
                n_images: 100,
                layer: 0,
                rs_ratios: vec![0.00067, 0.0013, 0.0027],
                rneu_ratios: vec![0.0, 0.00033, 0.00067],
                histogram_bins: 50,
            },
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn bad(key: &str, expected: &str, v: &Value) -> Error {
    Error::Config(format!("`{key}` must be {expected}, got {v}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, "a number", v)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_integer().and_then(|i| usize::try_from(i).ok()).ok_or_else(|| bad(key, "a nonnegative integer", v))
}

fn as_i8(key: &str, v: &Value) -> Result<i8> {
    v.as_integer().and_then(|i| i8::try_from(i).ok()).ok_or_else(|| bad(key, "a small integer", v))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, "a string", v))
}

fn as_list<'a>(key: &str, v: &'a Value) -> Result<&'a [Value]> {
    v.as_array().map(Vec::as_slice).ok_or_else(|| bad(key, "an array", v))
}

fn as_f64_list(key: &str, v: &Value) -> Result<Vec<f64>> {
    as_list(key, v)?.iter().map(|x| as_f64(key, x)).collect()
}

fn as_pair(key: &str, v: &Value) -> Result<(usize, usize)> {
    match as_list(key, v)? {
        [m, n] => Ok((as_usize(key, m)?, as_usize(key, n)?)),
        _ => Err(bad(key, "an [m, n] pair", v)),
    }
}

fn as_pairs(key: &str, v: &Value) -> Result<Vec<(usize, usize)>> {
    as_list(key, v)?.iter().map(|x| as_pair(key, x)).collect()
}

pub fn parse_discretization(s: &str) -> Result<Discretization> {
    match s {
        "4bit" | "four-bit" => Ok(Discretization::FourBit),
        "off" | "none" => Ok(Discretization::Off),
        other => Err(Error::Config(format!("unknown discretization `{other}` (expected 4bit or off)"))),
    }
}

/// Physical technology keys, resolved together once the file is read.
#[derive(Default)]
struct TechKeys {
    name: Option<String>,
    r_on: Option<f64>,
    r_off: Option<f64>,
    r_low: Option<f64>,
    r_high: Option<f64>,
    rs_ohm: Option<f64>,
    rneu_ohm: Option<f64>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        let mut cfg = RunConfig::default();
        let mut tech = TechKeys::default();
        for (key, v) in &entries {
            cfg.apply(key, v, &mut tech)?;
        }
        cfg.resolve_technology(tech)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &Value, tech: &mut TechKeys) -> Result<()> {
        match key {
            "technology.name" => tech.name = Some(as_str(key, v)?.to_string()),
            "technology.r_on_ohm" => tech.r_on = Some(as_f64(key, v)?),
            "technology.r_off_ohm" => tech.r_off = Some(as_f64(key, v)?),
            "technology.r_low_ohm" => tech.r_low = Some(as_f64(key, v)?),
            "technology.r_high_ohm" => tech.r_high = Some(as_f64(key, v)?),
            "nonideal.rs_ratio" => self.nonideal.rs_ratio = as_f64(key, v)?,
            "nonideal.rneu_ratio" => self.nonideal.rneu_ratio = as_f64(key, v)?,
            "nonideal.rs_ohm" => tech.rs_ohm = Some(as_f64(key, v)?),
            "nonideal.rneu_ohm" => tech.rneu_ohm = Some(as_f64(key, v)?),
            "nonideal.k_sigma" => self.nonideal.k_sigma = as_i8(key, v)?,
            "nonideal.sigma_unit" => self.nonideal.sigma_unit = as_f64(key, v)?,
            "network.layer_dims" => {
                self.layer_dims = as_list(key, v)?.iter().map(|x| as_usize(key, x)).collect::<Result<_>>()?
            }
            "train.mode" => self.mode = as_str(key, v)?.parse()?,
            "train.seed" => {
                self.seed = v.as_integer().and_then(|i| u64::try_from(i).ok()).ok_or_else(|| bad(key, "a nonnegative integer", v))?
            }
            "train.clip_percentile" => self.clip_percentile = as_f64(key, v)?,
            "train.discretization" => self.discretization = parse_discretization(as_str(key, v)?)?,
            "train.tiling" => self.tiling = Some(as_pairs(key, v)?),
            "ideal.epochs" => self.ideal.epochs = as_usize(key, v)?,
            "ideal.batch_size" => self.ideal.batch_size = as_usize(key, v)?,
            "ideal.learning_rate" => self.ideal.learning_rate = as_f64(key, v)?,
            "aware.epochs" => self.aware.epochs = as_usize(key, v)?,
            "aware.batch_size" => self.aware.batch_size = as_usize(key, v)?,
            "aware.learning_rate" => self.aware.learning_rate = as_f64(key, v)?,
            "aware.warm_start" => self.warm_start = Some(PathBuf::from(as_str(key, v)?)),
            "data.dir" => self.data.dir = PathBuf::from(as_str(key, v)?),
            "data.train_images" => self.data.train_images = Some(PathBuf::from(as_str(key, v)?)),
            "data.train_labels" => self.data.train_labels = Some(PathBuf::from(as_str(key, v)?)),
            "data.test_images" => self.data.test_images = Some(PathBuf::from(as_str(key, v)?)),
            "data.test_labels" => self.data.test_labels = Some(PathBuf::from(as_str(key, v)?)),
            "data.train_limit" => self.data.train_limit = Some(as_usize(key, v)?),
            "data.test_limit" => self.data.test_limit = Some(as_usize(key, v)?),
            "sweep.rs_ratios" => self.sweep.rs_ratios = as_f64_list(key, v)?,
            "sweep.rneu_ratios" => self.sweep.rneu_ratios = as_f64_list(key, v)?,
            "sweep.k_sigmas" => self.sweep.k_sigmas = as_list(key, v)?.iter().map(|x| as_i8(key, x)).collect::<Result<_>>()?,
            "sweep.tile_sizes" => self.sweep.tile_sizes = as_pairs(key, v)?,
            "sweep.repetitions" => self.sweep.repetitions = as_usize(key, v)?,
            "sweep.modes" => {
                self.sweep.modes = as_list(key, v)?.iter().map(|x| as_str(key, x)?.parse()).collect::<Result<_>>()?
            }
            "sweep.protocol" => self.sweep.protocol = as_str(key, v)?.parse()?,
            "sweep.baseline" => self.sweep_baseline = Some(PathBuf::from(as_str(key, v)?)),
            "validate.n_images" => self.validate.n_images = as_usize(key, v)?,
            "validate.layer" => self.validate.layer = as_usize(key, v)?,
            "validate.rs_ratios" => self.validate.rs_ratios = as_f64_list(key, v)?,
            "validate.rneu_ratios" => self.validate.rneu_ratios = as_f64_list(key, v)?,
            "validate.histogram_bins" => self.validate.histogram_bins = as_usize(key, v)?,
            other => {
                return Err(Error::Config(format!("unknown key `{other}`; valid keys are: {}", VALID_KEYS.join(", "))))
            }
        }
        Ok(())
    }

    fn resolve_technology(&mut self, t: TechKeys) -> Result<()> {
        let custom = t.r_low.is_some() || t.r_high.is_some() || t.r_on.is_some() || t.r_off.is_some();
        if custom {
            let (Some(r_low), Some(r_high)) = (t.r_low, t.r_high) else {
                return Err(Error::Config("custom technology needs both r_low_ohm and r_high_ohm".into()));
            };
            let range = match (t.r_on, t.r_off) {
                (Some(on), Some(off)) => Some((on, off)),
                (None, None) => None,
                _ => return Err(Error::Config("give both r_on_ohm and r_off_ohm, or neither".into())),
            };
            self.technology = TechnologyProfile::custom(t.name.as_deref().unwrap_or("custom"), range, r_low, r_high)?;
        } else if let Some(name) = &t.name {
            self.technology = TechnologyProfile::preset(name)?;
        }
        if let Some(ohm) = t.rs_ohm {
            self.nonideal.rs_ratio = self.technology.ratio_of(ohm);
        }
        if let Some(ohm) = t.rneu_ohm {
            self.nonideal.rneu_ratio = self.technology.ratio_of(ohm);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.nonideal.validate()?;
        for mode in [Mode::Ideal, Mode::Aware] {
            self.train_config(mode).validate()?;
        }
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::Config(format!("network.layer_dims must list at least two positive sizes, got {:?}", self.layer_dims)));
        }
        if let Some(t) = &self.tiling {
            if t.len() != self.layer_dims.len() - 1 {
                return Err(Error::Config(format!("train.tiling lists {} layers, network has {}", t.len(), self.layer_dims.len() - 1)));
            }
        }
        Ok(())
    }

    /// Training configuration of `mode` with this run's hardware settings.
    pub fn train_config(&self, mode: Mode) -> TrainConfig {
        let h = match mode {
            Mode::Ideal => self.ideal,
            Mode::Aware => self.aware,
        };
        TrainConfig {
            mode,
            epochs: h.epochs,
            batch_size: h.batch_size,
            learning_rate: h.learning_rate,
            seed: self.seed,
            nonideal: self.nonideal,
            tiling: self.tiling.clone(),
            clip_percentile: self.clip_percentile,
            discretization: self.discretization,
        }
    }
}
