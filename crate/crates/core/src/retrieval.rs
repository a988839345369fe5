//! Linear-scan Hamming retrieval over packed ternary codes and mean average
//! precision.

use std::fmt;
use std::str::FromStr;

use crate::codes::{hamming_words, words_for, PackedCode};
use crate::error::{Error, Result};

/// Ranking depth for retrieval and AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    All,
    Top(usize),
}

impl Cutoff {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            Cutoff::All => n,
            Cutoff::Top(k) => k.min(n),
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::All => f.write_str("all"),
            Cutoff::Top(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for Cutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(Cutoff::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(Cutoff::Top(k)),
            _ => Err(Error::config(format!(
                "cutoff must be \"all\" or a positive integer, got {s:?}"
            ))),
        }
    }
}

/// Denominator used by average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApNormalization {
    /// Number of relevant items that appear in the top K.
    #[default]
    RelevantInTopK,
    /// `min(R, K)` with `R` the number of relevant items in the whole index.
    MinRelevantK,
}

impl fmt::Display for ApNormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApNormalization::RelevantInTopK => "relevant_in_top_k",
            ApNormalization::MinRelevantK => "min_relevant_k",
        })
    }
}

impl FromStr for ApNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "relevant_in_top_k" => Ok(ApNormalization::RelevantInTopK),
            "min_relevant_k" => Ok(ApNormalization::MinRelevantK),
            other => Err(Error::config(format!("unknown AP normalization {other:?}"))),
        }
    }
}

/// Sorted, deduplicated, non-empty set of integer labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelSet(Vec<u32>);

impl LabelSet {
    pub fn new(mut labels: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label set"));
        }
        labels.sort_unstable();
        labels.dedup();
        Ok(Self(labels))
    }

    pub fn single(label: u32) -> Self {
        Self(vec![label])
    }

    pub fn labels(&self) -> &[u32] {
        &self.0
    }

    /// First label in ascending order; the training target for multi-label items.
    pub fn primary(&self) -> u32 {
        self.0[0]
    }

    pub fn intersects(&self, other: &LabelSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// Immutable collection of packed codes with their label sets. Planes are
/// stored contiguously: for item `i`, `pos` words then `neg` words.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    d: usize,
    words: usize,
    planes: Vec<u64>,
    labels: Vec<LabelSet>,
}

impl RetrievalIndex {
    pub fn new(codes: &[PackedCode], labels: Vec<LabelSet>) -> Result<Self> {
        if codes.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} label sets", codes.len()),
                got: labels.len().to_string(),
            });
        }
        let d = codes.first().map_or(0, PackedCode::dim);
        let words = words_for(d);
        let mut planes = Vec::with_capacity(codes.len() * 2 * words);
        for c in codes {
            if c.dim() != d {
                return Err(Error::DimensionMismatch(d, c.dim()));
            }
            planes.extend_from_slice(c.pos());
            planes.extend_from_slice(c.neg());
        }
        Ok(Self {
            d,
            words,
            planes,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }

    /// Distance from `q` to every indexed item, in id order.
    pub fn distances(&self, q: &PackedCode) -> Result<Vec<u32>> {
        if self.is_empty() {
            return Err(Error::Empty("retrieval index"));
        }
        if q.dim() != self.d {
            return Err(Error::DimensionMismatch(self.d, q.dim()));
        }
        let w = self.words;
        Ok(self
            .planes
            .chunks_exact(2 * w)
            .map(|item| hamming_words(q.pos(), q.neg(), &item[..w], &item[w..]))
            .collect())
    }
}

/// Ranks all items by ascending distance with ties broken by ascending id and
/// returns the first `cutoff` of them as `(id, distance)`.
///
/// Distances are bounded by `2d`, so the ranking is a counting sort.
pub fn query_topk(index: &RetrievalIndex, q: &PackedCode, cutoff: Cutoff) -> Result<Vec<(usize, u32)>> {
    let dists = index.distances(q)?;
    Ok(rank_by_distance(&dists, 2 * index.dim(), cutoff.resolve(dists.len())))
}

fn rank_by_distance(dists: &[u32], max_dist: usize, take: usize) -> Vec<(usize, u32)> {
    let mut start = vec![0usize; max_dist + 2];
    for &d in dists {
        start[d as usize + 1] += 1;
    }
    for i in 1..start.len() {
        start[i] += start[i - 1];
    }
    let mut ranked = vec![(0usize, 0u32); dists.len()];
    for (id, &d) in dists.iter().enumerate() {
        let slot = &mut start[d as usize];
        ranked[*slot] = (id, d);
        *slot += 1;
    }
    ranked.truncate(take);
    ranked
}

/// Average precision of a ranked relevance list, normalized by the number of
/// relevant items found within the top K. Zero if none is found.
pub fn average_precision(rels: &[bool], cutoff: Cutoff) -> f64 {
    ap_with(rels, cutoff, ApNormalization::RelevantInTopK, 0)
}

/// Average precision with an explicit normalization. `total_relevant` is only
/// read by [`ApNormalization::MinRelevantK`].
pub fn average_precision_with(rels: &[bool], cutoff: Cutoff, norm: ApNormalization, total_relevant: usize) -> f64 {
    ap_with(rels, cutoff, norm, total_relevant)
}

fn ap_with(rels: &[bool], cutoff: Cutoff, norm: ApNormalization, total_relevant: usize) -> f64 {
    let k = cutoff.resolve(rels.len());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in rels[..k].iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let denom = match norm {
        ApNormalization::RelevantInTopK => hits,
        ApNormalization::MinRelevantK => {
            let k_full = match cutoff {
                Cutoff::All => total_relevant,
                Cutoff::Top(k) => k,
            };
            total_relevant.min(k_full)
        }
    };
    if hits == 0 || denom == 0 {
        0.0
    } else {
        sum / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub per_query_ap: Vec<f64>,
    pub query_ids: Vec<usize>,
    pub cutoff: Cutoff,
}

impl EvalReport {
    /// One `"<query id> <AP>"` line per query, then `"mAP <value>"`; six
    /// decimals throughout.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, ap) in self.query_ids.iter().zip(&self.per_query_ap) {
            out.push_str(&format!("{id} {ap:.6}\n"));
        }
        out.push_str(&format!("mAP {:.6}\n", self.map));
        out
    }
}

/// Evaluates every query against the index. A retrieved item is relevant when
/// its label set intersects the query's. Query ids in the report are
/// positional (`0..n`); callers may overwrite them.
pub fn mean_ap(
    index: &RetrievalIndex,
    queries: &[PackedCode],
    query_labels: &[LabelSet],
    cutoff: Cutoff,
    norm: ApNormalization,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::Empty("query set"));
    }
    if queries.len() != query_labels.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} query label sets", queries.len()),
            got: query_labels.len().to_string(),
        });
    }
    let mut per_query_ap = Vec::with_capacity(queries.len());
    for (q, ql) in queries.iter().zip(query_labels) {
        let ranked = query_topk(index, q, cutoff)?;
        let rels: Vec<bool> = ranked.iter().map(|&(id, _)| index.labels[id].intersects(ql)).collect();
        let total_relevant = match norm {
            ApNormalization::MinRelevantK => index.labels.iter().filter(|l| l.intersects(ql)).count(),
            ApNormalization::RelevantInTopK => 0,
        };
        per_query_ap.push(ap_with(&rels, cutoff, norm, total_relevant));
    }
    let map = per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64;
    Ok(EvalReport {
        map,
        query_ids: (0..queries.len()).collect(),
        per_query_ap,
        cutoff,
    })
}
