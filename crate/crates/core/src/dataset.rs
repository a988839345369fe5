//! Datasets: feature matrix, label sets and disjoint query/retrieval/train
//! splits. Synthetic Gaussian clusters stand in for image features.
//!
//! File formats:
//! - features (`TFV1`): magic, `u32 n`, `u32 dim`, then `n·dim` `f32`
//!   row-major, little-endian;
//! - labels: UTF-8, one item per line, comma-separated integer labels;
//! - splits: `query = ...`, `retrieval = ...`, `train = ...` lines of
//!   comma-separated item ids.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::retrieval::LabelSet;

pub const FEATURE_MAGIC: &[u8; 4] = b"TFV1";

const SPLIT_STREAM: u64 = 0x5350_4c49_5453_0001;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub query: Vec<usize>,
    pub retrieval: Vec<usize>,
    /// Subset of `retrieval`.
    pub train: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f32>,
    pub labels: Vec<LabelSet>,
    pub splits: Splits,
}

impl Dataset {
    pub fn new(features: Array2<f32>, labels: Vec<LabelSet>, splits: Splits) -> Result<Self> {
        let ds = Self {
            features,
            labels,
            splits,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.features.ncols()
    }

    /// One more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels
            .iter()
            .flat_map(|l| l.labels().iter())
            .max()
            .map_or(0, |&m| m as usize + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.labels.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} label sets"),
                got: self.labels.len().to_string(),
            });
        }
        if let Some(&x) = self.features.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(f64::from(x)));
        }
        let s = &self.splits;
        let mut role = vec![0u8; n];
        for (ids, bit) in [(&s.query, 1u8), (&s.retrieval, 2), (&s.train, 4)] {
            for &id in ids {
                if id >= n {
                    return Err(Error::OutOfRange {
                        what: "split id",
                        value: id,
                        limit: n,
                    });
                }
                if role[id] & bit != 0 {
                    return Err(Error::config(format!("item {id} listed twice in one split")));
                }
                role[id] |= bit;
            }
        }
        if role.iter().any(|&r| r & 3 == 3) {
            return Err(Error::config("query and retrieval splits overlap"));
        }
        if role.iter().any(|&r| r & 4 != 0 && r & 2 == 0) {
            return Err(Error::config("train split must be a subset of the retrieval split"));
        }
        Ok(())
    }

    /// Features of the given rows, widened to f64.
    pub fn rows_f64(&self, ids: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((ids.len(), self.input_dim()));
        for (mut row, &id) in out.outer_iter_mut().zip(ids) {
            for (o, &v) in row.iter_mut().zip(self.features.row(id)) {
                *o = f64::from(v);
            }
        }
        out
    }

    pub fn labels_of(&self, ids: &[usize]) -> Vec<LabelSet> {
        ids.iter().map(|&i| self.labels[i].clone()).collect()
    }
}

/// Split sizes, applied per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of each class held out as queries; rounded, at least one.
    pub query_fraction: f64,
    /// Training items drawn per class from the retrieval items.
    pub train_per_class: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            query_fraction: 0.1,
            train_per_class: 100,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.query_fraction > 0.0 && self.query_fraction < 1.0) {
            return Err(Error::config(format!(
                "query_fraction must lie in (0, 1), got {}",
                self.query_fraction
            )));
        }
        if self.train_per_class == 0 {
            return Err(Error::config("train_per_class must be positive"));
        }
        Ok(())
    }
}

/// Seeded per-class splits, grouping items by their primary label.
pub fn make_splits(labels: &[LabelSet], spec: &SplitSpec, seed: u64) -> Result<Splits> {
    spec.validate()?;
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.primary()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM);
    let mut splits = Splits::default();
    for (class, mut ids) in by_class {
        if ids.len() < 2 {
            return Err(Error::config(format!(
                "class {class} has {} item(s); need at least 2 to split",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        let n_query = ((ids.len() as f64 * spec.query_fraction).round() as usize).clamp(1, ids.len() - 1);
        let (query, retrieval) = ids.split_at(n_query);
        splits.query.extend_from_slice(query);
        splits.retrieval.extend_from_slice(retrieval);
        let mut pool = retrieval.to_vec();
        pool.shuffle(&mut rng);
        pool.truncate(spec.train_per_class);
        splits.train.extend(pool);
    }
    splits.query.sort_unstable();
    splits.retrieval.sort_unstable();
    splits.train.sort_unstable();
    Ok(splits)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    /// Per-coordinate standard deviation of the noise around each center.
    pub spread: f64,
    pub seed: u64,
    pub split: SplitSpec,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.input_dim == 0 {
            return Err(Error::config("classes and input_dim must be positive"));
        }
        if self.per_class < 2 {
            return Err(Error::config("per_class must be at least 2"));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::config(format!(
                "spread must be finite and >= 0, got {}",
                self.spread
            )));
        }
        self.split.validate()
    }
}

/// Gaussian clusters. Centers are unit Gaussians scaled by `1/sqrt(dim)` (so
/// their expected norm is 1); samples add `spread`-scaled Gaussian noise.
/// Items are class-major: item `i` belongs to class `i / per_class`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = 1.0 / (spec.input_dim as f64).sqrt();
    let centers = Array2::from_shape_fn((spec.classes, spec.input_dim), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    });
    let n = spec.classes * spec.per_class;
    let mut features = Array2::<f32>::zeros((n, spec.input_dim));
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        let center = centers.row(i / spec.per_class);
        for (v, &c) in row.iter_mut().zip(center) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (c + spec.spread * z) as f32;
        }
    }
    let labels: Vec<LabelSet> = (0..n).map(|i| LabelSet::single((i / spec.per_class) as u32)).collect();
    let splits = make_splits(&labels, &spec.split, spec.seed)?;
    Dataset::new(features, labels, splits)
}

pub fn write_features<W: Write>(mut w: W, features: &Array2<f32>) -> Result<()> {
    let (n, dim) = features.dim();
    let n = u32::try_from(n).map_err(|_| Error::format("TFV1", "too many rows"))?;
    let dim = u32::try_from(dim).map_err(|_| Error::format("TFV1", "dimension too large"))?;
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    for &v in features {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<Array2<f32>> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| Error::format("TFV1", "truncated header"))?;
    if &header[..4] != FEATURE_MAGIC {
        return Err(Error::format("TFV1", "bad magic"));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != n * dim * 4 {
        return Err(Error::format(
            "TFV1",
            format!("expected {} data bytes, found {}", n * dim * 4, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Array2::from_shape_vec((n, dim), values).map_err(|e| Error::format("TFV1", e.to_string()))
}

fn join_ids<T: ToString>(ids: &[T]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_ids<T: std::str::FromStr>(s: &str, line: usize) -> Result<Vec<T>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim().parse::<T>().map_err(|_| Error::Parse {
                line,
                reason: format!("not a non-negative integer: {:?}", t.trim()),
            })
        })
        .collect()
}

pub fn write_labels<W: Write>(mut w: W, labels: &[LabelSet]) -> Result<()> {
    for l in labels {
        writeln!(w, "{}", join_ids(l.labels()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(r: R) -> Result<Vec<LabelSet>> {
    BufReader::new(r)
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line?;
            let labels = parse_ids::<u32>(&line, i + 1)?;
            LabelSet::new(labels).map_err(|_| Error::Parse {
                line: i + 1,
                reason: "empty label set".into(),
            })
        })
        .collect()
}

pub fn write_splits<W: Write>(mut w: W, splits: &Splits) -> Result<()> {
    writeln!(w, "query = {}", join_ids(&splits.query))?;
    writeln!(w, "retrieval = {}", join_ids(&splits.retrieval))?;
    writeln!(w, "train = {}", join_ids(&splits.train))?;
    w.flush()?;
    Ok(())
}

pub fn read_splits<R: Read>(r: R) -> Result<Splits> {
    let mut query = None;
    let mut retrieval = None;
    let mut train = None;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            reason: "expected `name = ids`".into(),
        })?;
        let slot = match key.trim() {
            "query" => &mut query,
            "retrieval" => &mut retrieval,
            "train" => &mut train,
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: format!("unknown split {other:?}"),
                })
            }
        };
        if slot.is_some() {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("split {:?} given twice", key.trim()),
            });
        }
        *slot = Some(parse_ids::<usize>(value, i + 1)?);
    }
    match (query, retrieval, train) {
        (Some(query), Some(retrieval), Some(train)) => Ok(Splits {
            query,
            retrieval,
            train,
        }),
        _ => Err(Error::format(
            "splits",
            "query, retrieval and train must all be present",
        )),
    }
}
