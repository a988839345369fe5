//! Experiment configuration as flat `key = value` text.
//!
//! Blank lines and anything after `#` are ignored. Unknown keys, repeated
//! keys, and keys that do not apply to the selected data source are errors.
//! Missing keys take their defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::activation::{ActivationConfig, ContinuationSchedule, DEFAULT_ALPHA};
use crate::dataset::{SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, TrainConfig};
use crate::retrieval::{ApNormalization, Cutoff};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        per_class: usize,
        input_dim: usize,
        spread: f64,
    },
    Files {
        features: PathBuf,
        labels: PathBuf,
        /// Derived from `query_fraction`/`train_per_class` when absent.
        splits: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub data_seed: u64,
    pub split: SplitSpec,
    pub hidden_dims: Vec<usize>,
    pub code_dim: usize,
    pub alpha: f64,
    pub train: TrainConfig,
    pub eval_k: Cutoff,
    pub ap_normalization: ApNormalization,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic {
                classes: 10,
                per_class: 500,
                input_dim: 128,
                spread: 0.3,
            },
            data_seed: 1,
            split: SplitSpec::default(),
            hidden_dims: vec![256, 256],
            code_dim: 32,
            alpha: DEFAULT_ALPHA,
            train: TrainConfig::default(),
            eval_k: Cutoff::All,
            ap_normalization: ApNormalization::default(),
            seeds: vec![1, 2, 3],
        }
    }
}

const SYNTHETIC_KEYS: &[&str] = &["classes", "per_class", "input_dim", "spread"];
const FILE_KEYS: &[&str] = &["features", "labels", "splits"];
const COMMON_KEYS: &[&str] = &[
    "data",
    "data_seed",
    "query_fraction",
    "train_per_class",
    "hidden_dims",
    "code_dim",
    "alpha",
    "k_start",
    "k_end",
    "stride_epochs",
    "epochs",
    "batch_size",
    "lr0",
    "momentum",
    "weight_decay",
    "eval_k",
    "ap_normalization",
    "seeds",
];

fn is_known(key: &str) -> bool {
    COMMON_KEYS.contains(&key) || SYNTHETIC_KEYS.contains(&key) || FILE_KEYS.contains(&key)
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((v, line)) => v.parse::<T>().map_err(|_| Error::Parse {
                line,
                reason: format!("invalid value {v:?} for {key}"),
            }),
        }
    }

    fn take_with<T>(&mut self, key: &str, default: T, f: impl Fn(&str) -> Result<T>) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((v, line)) => f(&v).map_err(|e| Error::Parse {
                line,
                reason: format!("{key}: {e}"),
            }),
        }
    }

    fn take_list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        self.take_with(key, default, |v| {
            if v.trim().is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<T>()
                        .map_err(|_| Error::config(format!("bad list element {:?}", t.trim())))
                })
                .collect()
        })
    }
}

fn insert(entries: &mut Entries, raw: &str, line: usize, allow_replace: bool) -> Result<()> {
    let content = raw.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return Ok(());
    }
    let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
        line,
        reason: format!("expected `key = value`, got {content:?}"),
    })?;
    let key = key.trim();
    if !is_known(key) {
        return Err(Error::Parse {
            line,
            reason: format!("unknown key {key:?}"),
        });
    }
    let prev = entries.map.insert(key.to_string(), (value.trim().to_string(), line));
    if prev.is_some() && !allow_replace {
        return Err(Error::Parse {
            line,
            reason: format!("duplicate key {key:?}"),
        });
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, then applies `key=value` overrides on top of it. Override
    /// errors report line 0.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut entries = Entries { map: BTreeMap::new() };
        for (i, line) in text.lines().enumerate() {
            insert(&mut entries, line, i + 1, false)?;
        }
        for o in overrides {
            insert(&mut entries, o, 0, true)?;
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut e: Entries) -> Result<Self> {
        let d = Self::default();
        let source = e.take("data", "synthetic".to_string())?;
        let data = match source.as_str() {
            "synthetic" => {
                if let Some(k) = FILE_KEYS.iter().find(|k| e.map.contains_key(**k)) {
                    return Err(Error::config(format!("key {k:?} requires data = files")));
                }
                let DataSource::Synthetic {
                    classes,
                    per_class,
                    input_dim,
                    spread,
                } = d.data
                else {
                    unreachable!("default data source is synthetic")
                };
                DataSource::Synthetic {
                    classes: e.take("classes", classes)?,
                    per_class: e.take("per_class", per_class)?,
                    input_dim: e.take("input_dim", input_dim)?,
                    spread: e.take("spread", spread)?,
                }
            }
            "files" => {
                if let Some(k) = SYNTHETIC_KEYS.iter().find(|k| e.map.contains_key(**k)) {
                    return Err(Error::config(format!("key {k:?} requires data = synthetic")));
                }
                let features = e.take("features", String::new())?;
                let labels = e.take("labels", String::new())?;
                if features.is_empty() || labels.is_empty() {
                    return Err(Error::config("data = files needs both `features` and `labels`"));
                }
                let splits = e.take("splits", String::new())?;
                DataSource::Files {
                    features: features.into(),
                    labels: labels.into(),
                    splits: (!splits.is_empty()).then(|| splits.into()),
                }
            }
            other => {
                return Err(Error::config(format!(
                    "data must be `synthetic` or `files`, got {other:?}"
                )))
            }
        };

        let split = SplitSpec {
            query_fraction: e.take("query_fraction", d.split.query_fraction)?,
            train_per_class: e.take("train_per_class", d.split.train_per_class)?,
        };
        let epochs = e.take("epochs", d.train.epochs)?;
        let ds = d.train.schedule;
        let schedule = ContinuationSchedule::new(
            e.take("k_start", ds.k_start())?,
            e.take("k_end", ds.k_end())?,
            e.take("stride_epochs", ds.stride_epochs())?,
            epochs,
        )?;
        let train = TrainConfig {
            epochs,
            batch_size: e.take("batch_size", d.train.batch_size)?,
            lr0: e.take("lr0", d.train.lr0)?,
            momentum: e.take("momentum", d.train.momentum)?,
            weight_decay: e.take("weight_decay", d.train.weight_decay)?,
            schedule,
        };
        let cfg = Self {
            data,
            data_seed: e.take("data_seed", d.data_seed)?,
            split,
            hidden_dims: e.take_list("hidden_dims", d.hidden_dims)?,
            code_dim: e.take("code_dim", d.code_dim)?,
            alpha: e.take("alpha", d.alpha)?,
            train,
            eval_k: e.take_with("eval_k", d.eval_k, str::parse)?,
            ap_normalization: e.take_with("ap_normalization", d.ap_normalization, str::parse)?,
            seeds: e.take_list("seeds", d.seeds)?,
        };
        debug_assert!(e.map.is_empty(), "unconsumed keys: {:?}", e.map.keys());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ActivationConfig::new(self.alpha, self.train.schedule.k_start())?;
        self.train.validate()?;
        self.split.validate()?;
        if self.code_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config("code_dim and hidden widths must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if let DataSource::Synthetic { .. } = self.data {
            self.synthetic_spec().expect("synthetic source").validate()?;
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        match self.data {
            DataSource::Synthetic {
                classes,
                per_class,
                input_dim,
                spread,
            } => Some(SyntheticSpec {
                classes,
                per_class,
                input_dim,
                spread,
                seed: self.data_seed,
                split: self.split,
            }),
            DataSource::Files { .. } => None,
        }
    }

    pub fn network_config(&self, input_dim: usize, num_classes: usize, seed: u64) -> Result<NetworkConfig> {
        let cfg = NetworkConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            code_dim: self.code_dim,
            num_classes,
            activation: ActivationConfig::new(self.alpha, self.train.schedule.k_start())?,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        fn list<T: ToString>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        match &self.data {
            DataSource::Synthetic {
                classes,
                per_class,
                input_dim,
                spread,
            } => {
                let _ = writeln!(s, "data = synthetic");
                let _ = writeln!(s, "classes = {classes}");
                let _ = writeln!(s, "per_class = {per_class}");
                let _ = writeln!(s, "input_dim = {input_dim}");
                let _ = writeln!(s, "spread = {spread}");
            }
            DataSource::Files {
                features,
                labels,
                splits,
            } => {
                let _ = writeln!(s, "data = files");
                let _ = writeln!(s, "features = {}", features.display());
                let _ = writeln!(s, "labels = {}", labels.display());
                if let Some(p) = splits {
                    let _ = writeln!(s, "splits = {}", p.display());
                }
            }
        }
        let t = &self.train;
        let _ = writeln!(s, "data_seed = {}", self.data_seed);
        let _ = writeln!(s, "query_fraction = {}", self.split.query_fraction);
        let _ = writeln!(s, "train_per_class = {}", self.split.train_per_class);
        let _ = writeln!(s, "hidden_dims = {}", list(&self.hidden_dims));
        let _ = writeln!(s, "code_dim = {}", self.code_dim);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "k_start = {}", t.schedule.k_start());
        let _ = writeln!(s, "k_end = {}", t.schedule.k_end());
        let _ = writeln!(s, "stride_epochs = {}", t.schedule.stride_epochs());
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "lr0 = {}", t.lr0);
        let _ = writeln!(s, "momentum = {}", t.momentum);
        let _ = writeln!(s, "weight_decay = {}", t.weight_decay);
        let _ = writeln!(s, "eval_k = {}", self.eval_k);
        let _ = writeln!(s, "ap_normalization = {}", self.ap_normalization);
        let _ = writeln!(s, "seeds = {}", list(&self.seeds));
        s
    }
}
