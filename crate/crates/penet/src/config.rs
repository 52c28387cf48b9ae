//! Network geometry, training settings and the flat `key = value` config format.

use std::path::{Path, PathBuf};

use penet_core::{NoiseFamily, SdeFamily};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Shortest trajectory the network accepts.
pub const MIN_LEN: usize = 16;

/// How a trajectory is presented to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Per-sample zero mean / unit variance; the mean and log standard deviation
    /// are appended next to `h` before the dense head.
    #[default]
    Standardized,
    /// The raw path; only `h` is appended.
    Raw,
}

impl InputMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standardized" => Some(Self::Standardized),
            "raw" => Some(Self::Raw),
            _ => None,
        }
    }

    /// Scalars appended to the pooled LSTM features.
    pub fn extra_features(self) -> usize {
        match self {
            Self::Standardized => 3,
            Self::Raw => 1,
        }
    }
}

/// Layer sizes, independent of the SDE family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub conv_layers: usize,
    pub conv_kernel: usize,
    pub conv_channels: usize,
    pub pool: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    /// Hidden dense blocks; the output layer comes on top of these.
    pub fc_layers: usize,
    pub fc_width: usize,
    pub use_cnn: bool,
    pub input_mode: InputMode,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            conv_layers: 2,
            conv_kernel: 3,
            conv_channels: 25,
            pool: 2,
            lstm_layers: 4,
            lstm_hidden: 25,
            fc_layers: 3,
            fc_width: 20,
            use_cnn: true,
            input_mode: InputMode::Standardized,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.use_cnn && self.conv_layers == 0 {
            return Err(config_err("use_cnn needs at least one conv layer"));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(config_err(format!(
                "conv_kernel must be odd, got {}",
                self.conv_kernel
            )));
        }
        if self.pool == 0 {
            return Err(config_err("pool must be >= 1"));
        }
        let checks = [
            ("conv_channels", self.conv_channels),
            ("lstm_layers", self.lstm_layers),
            ("lstm_hidden", self.lstm_hidden),
            ("fc_layers", self.fc_layers),
            ("fc_width", self.fc_width),
        ];
        for (name, v) in checks {
            if v == 0 {
                return Err(config_err(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Steps the LSTM runs for an input of length `n`.
    pub fn lstm_len(&self, n: usize) -> usize {
        if !self.use_cnn {
            return n;
        }
        (0..self.conv_layers).fold(n, |len, _| len / self.pool)
    }

    /// Width of the vector entering the dense head.
    pub fn head_input(&self) -> usize {
        self.lstm_hidden + self.input_mode.extra_features()
    }
}

/// Everything needed to rebuild a model's weight shapes and its output scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PEnetConfig {
    #[serde(with = "family_name")]
    pub family: NoiseFamily,
    /// Training range `[lo, hi]` of each output parameter.
    pub ranges: Vec<[f64; 2]>,
    /// Loss weights λ.
    pub target_weights: Vec<f64>,
    #[serde(flatten)]
    pub arch: Architecture,
}

mod family_name {
    use penet_core::NoiseFamily;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(f: &NoiseFamily, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(f.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NoiseFamily, D::Error> {
        let s = String::deserialize(d)?;
        NoiseFamily::parse(&s).ok_or_else(|| D::Error::custom(format!("unknown family {s:?}")))
    }
}

impl PEnetConfig {
    /// Default geometry for `family`, with λ_i = 1 / (range width).
    pub fn for_family(family: &SdeFamily, arch: Architecture) -> Self {
        let ranges: Vec<[f64; 2]> = family.param_ranges().iter().map(|r| [r.lo, r.hi]).collect();
        let target_weights = ranges.iter().map(|[lo, hi]| 1.0 / (hi - lo)).collect();
        Self {
            family: family.noise,
            ranges,
            target_weights,
            arch,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let m = self.output_dim();
        if m != self.family.param_dim() {
            return Err(config_err(format!(
                "{} family has {} parameters, config lists {m} ranges",
                self.family.name(),
                self.family.param_dim()
            )));
        }
        if self.target_weights.len() != m {
            return Err(config_err(format!(
                "expected {m} loss weights, got {}",
                self.target_weights.len()
            )));
        }
        if let Some(w) = self
            .target_weights
            .iter()
            .find(|w| !(**w > 0.0 && w.is_finite()))
        {
            return Err(config_err(format!(
                "loss weights must be positive, got {w}"
            )));
        }
        if let Some(r) = self
            .ranges
            .iter()
            .find(|[lo, hi]| !(hi > lo && lo.is_finite() && hi.is_finite()))
        {
            return Err(config_err(format!("degenerate output range {r:?}")));
        }
        Ok(())
    }

    /// Centre and half-width per output, mapping the raw head output onto the range.
    pub fn output_affine(&self) -> (Vec<f64>, Vec<f64>) {
        let scale = self.ranges.iter().map(|[lo, hi]| 0.5 * (hi - lo)).collect();
        let shift = self.ranges.iter().map(|[lo, hi]| 0.5 * (hi + lo)).collect();
        (scale, shift)
    }
}

/// How training batches are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bucketing {
    /// Each batch holds records of a single length.
    #[default]
    EqualLength,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub arch: Architecture,
    /// Replaces the default λ when set.
    pub target_weights: Option<Vec<f64>>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub bucketing: Bucketing,
    pub val_fraction: f64,
    pub patience: usize,
    /// Training records used to re-estimate batch-norm statistics with the end-of-epoch
    /// weights; 0 keeps the running averages.
    pub bn_recalibration: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            arch: Architecture::default(),
            target_weights: None,
            batch_size: 64,
            max_epochs: 60,
            lr: 1e-3,
            clip_norm: Some(5.0),
            bucketing: Bucketing::EqualLength,
            val_fraction: 0.05,
            patience: 8,
            bn_recalibration: 2048,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config_err(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(format!("{key}: expected true/false, got {v:?}"))),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.batch_size < 2 {
            return Err(config_err("batch_size must be >= 2 for batch norm"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction <= 0.5) {
            return Err(config_err(format!(
                "val_fraction must be in (0, 0.5], got {}",
                self.val_fraction
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_err(format!("lr must be > 0, got {}", self.lr)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(config_err(format!("clip_norm must be > 0, got {c}")));
            }
        }
        if self.max_epochs == 0 {
            return Err(config_err("max_epochs must be >= 1"));
        }
        Ok(())
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let a = &mut self.arch;
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "max_epochs" => self.max_epochs = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "clip_norm" => {
                self.clip_norm = match value {
                    "none" | "off" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "bucketing" => match value {
                "length" => self.bucketing = Bucketing::EqualLength,
                v => return Err(config_err(format!("bucketing: unknown policy {v:?}"))),
            },
            "val_fraction" => self.val_fraction = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "bn_recalibration" => self.bn_recalibration = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "lambda" => {
                let ws = value
                    .split(',')
                    .map(|v| parse_num::<f64>(key, v.trim()))
                    .collect::<Result<Vec<_>>>()?;
                self.target_weights = Some(ws);
            }
            "conv_layers" => a.conv_layers = parse_num(key, value)?,
            "conv_kernel" => a.conv_kernel = parse_num(key, value)?,
            "conv_channels" => a.conv_channels = parse_num(key, value)?,
            "pool" => a.pool = parse_num(key, value)?,
            "lstm_layers" => a.lstm_layers = parse_num(key, value)?,
            "lstm_hidden" => a.lstm_hidden = parse_num(key, value)?,
            "fc_layers" => a.fc_layers = parse_num(key, value)?,
            "fc_width" => a.fc_width = parse_num(key, value)?,
            "use_cnn" => a.use_cnn = parse_bool(key, value)?,
            "input_mode" => {
                a.input_mode = InputMode::parse(value)
                    .ok_or_else(|| config_err(format!("input_mode: unknown mode {value:?}")))?
            }
            _ => return Err(config_err(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parse the flat text format: one `key = value` per line, `#` starts a comment.
    /// A relative `dataset` path is taken relative to `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(base) = base {
            if cfg.dataset.is_relative() && !cfg.dataset.as_os_str().is_empty() {
                cfg.dataset = base.join(&cfg.dataset);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    /// Model config for a dataset of `family`.
    pub fn model_config(&self, family: &SdeFamily) -> Result<PEnetConfig> {
        let mut cfg = PEnetConfig::for_family(family, self.arch.clone());
        if let Some(w) = &self.target_weights {
            cfg.target_weights = w.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
