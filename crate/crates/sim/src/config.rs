//! Run settings from `key=value` files and command-line flags.
//!
//! Keys are the long flag names without dashes in front (`max-delay=10`).
//! Lines starting with `#` and blank lines are ignored. Flags given on the
//! command line override the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use psgd_core::data::synth_regression;
use psgd_core::harness::{GradientScale, SmoothnessScale};
use psgd_core::optim::SecondMoment;
use psgd_core::{Dataset, ExperimentConfig, Scheme};

use crate::idx::load_idx;
use crate::SimError;

pub const KEYS: &[&str] = &[
    "scheme",
    "workers",
    "groups",
    "group-size",
    "max-delay",
    "threshold-c",
    "lag-weights",
    "lr",
    "beta1",
    "beta2",
    "epsilon",
    "eta",
    "batch",
    "iters",
    "loss-threshold",
    "loss-every",
    "seed",
    "smoothness-scale",
    "gradient-scale",
    "second-moment",
    "mnist-images",
    "mnist-labels",
    "limit",
    "synth",
    "data-seed",
    "bias",
    "out",
];

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic { n: usize, dim: usize, noise_sd: f64 },
    Idx { images: PathBuf, labels: PathBuf, limit: Option<usize> },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic { n: 2400, dim: 50, noise_sd: 0.0 }
    }
}

impl DatasetSpec {
    pub fn load(&self, seed: u64, bias: bool) -> Result<Dataset, SimError> {
        let data = match self {
            DatasetSpec::Synthetic { n, dim, noise_sd } => synth_regression(*n, *dim, *noise_sd, seed)?.dataset,
            DatasetSpec::Idx { images, labels, limit } => load_idx(images, labels, *limit)?,
        };
        Ok(if bias { data.with_bias() } else { data })
    }
}

/// Flat key/value settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut settings = Settings::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            settings.set(key.trim(), value.trim())?;
        }
        Ok(settings)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), SimError> {
        if !KEYS.contains(&key) {
            return Err(SimError::Config(format!("unknown setting `{key}`")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Apply `other` on top of `self`.
    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, SimError> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| SimError::Config(format!("invalid value `{v}` for `{key}`"))))
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, SimError> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| SimError::Config(format!("invalid number `{x}` in `{key}`")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn scheme(&self) -> Result<Option<Scheme>, SimError> {
        self.get("scheme").map(|s| s.parse::<Scheme>().map_err(|e| SimError::Config(e.to_string()))).transpose()
    }

    pub fn out(&self) -> Option<PathBuf> {
        self.get("out").map(PathBuf::from)
    }

    /// Experiment configuration for `scheme`, starting from that scheme's
    /// defaults and applying every setting present.
    pub fn experiment(&self, scheme: Scheme) -> Result<ExperimentConfig, SimError> {
        let mut c = ExperimentConfig::new(scheme);
        macro_rules! apply {
            ($($key:literal => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.parsed($key)? { c.$field = v; })*
            };
        }
        apply! {
            "workers" => workers,
            "groups" => groups,
            "group-size" => group_size,
            "max-delay" => max_delay,
            "threshold-c" => threshold_c,
            "lr" => lr,
            "beta1" => beta1,
            "beta2" => beta2,
            "epsilon" => epsilon,
            "eta" => eta,
            "batch" => batch,
            "iters" => max_iters,
            "loss-threshold" => loss_threshold,
            "loss-every" => loss_every,
            "seed" => seed,
        }
        if let Some(w) = self.list("lag-weights")? {
            c.lag_weights = Some(w);
        }
        if let Some(v) = self.get("smoothness-scale") {
            c.smoothness_scale = match v {
                "local" => SmoothnessScale::Local,
                "batch" => SmoothnessScale::Batch,
                _ => return Err(SimError::Config(format!("smoothness-scale must be local or batch, not `{v}`"))),
            };
        }
        if let Some(v) = self.get("gradient-scale") {
            c.gradient_scale = match v {
                "sum" => GradientScale::Sum,
                "mean" => GradientScale::Mean,
                _ => return Err(SimError::Config(format!("gradient-scale must be sum or mean, not `{v}`"))),
            };
        }
        if let Some(v) = self.get("second-moment") {
            c.second_moment = match v {
                "decay-max" => SecondMoment::DecayMax,
                "classical" => SecondMoment::Classical,
                _ => return Err(SimError::Config(format!("second-moment must be decay-max or classical, not `{v}`"))),
            };
        }
        c.validate()?;
        Ok(c)
    }

    pub fn dataset(&self) -> Result<DatasetSpec, SimError> {
        match (self.get("mnist-images"), self.get("mnist-labels")) {
            (Some(images), Some(labels)) => {
                if self.get("synth").is_some() {
                    return Err(SimError::Config("give either IDX files or --synth, not both".into()));
                }
                Ok(DatasetSpec::Idx { images: images.into(), labels: labels.into(), limit: self.parsed("limit")? })
            }
            (None, None) => match self.list("synth")? {
                None => Ok(DatasetSpec::default()),
                Some(v) if v.len() == 3 && v[0] >= 1.0 && v[1] >= 1.0 && v[0].fract() == 0.0 && v[1].fract() == 0.0 => {
                    Ok(DatasetSpec::Synthetic { n: v[0] as usize, dim: v[1] as usize, noise_sd: v[2] })
                }
                Some(_) => Err(SimError::Config("--synth expects N,d,sd".into())),
            },
            _ => Err(SimError::Config("--mnist-images and --mnist-labels must be given together".into())),
        }
    }

    /// Seed of the synthetic generator: `data-seed`, else the run seed.
    pub fn data_seed(&self) -> Result<u64, SimError> {
        Ok(match self.parsed("data-seed")? {
            Some(s) => s,
            None => self.parsed("seed")?.unwrap_or(0),
        })
    }

    /// Append a constant feature. Defaults to on for IDX input, off for
    /// synthetic data (whose labels have no intercept).
    pub fn bias(&self, spec: &DatasetSpec) -> Result<bool, SimError> {
        Ok(self.parsed("bias")?.unwrap_or(matches!(spec, DatasetSpec::Idx { .. })))
    }

    pub fn load_dataset(&self) -> Result<Dataset, SimError> {
        let spec = self.dataset()?;
        spec.load(self.data_seed()?, self.bias(&spec)?)
    }
}
