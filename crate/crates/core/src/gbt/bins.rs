//! Quantile binning of feature columns.

use serde::{Deserialize, Serialize};

use crate::Matrix;

pub type BinIndex = u16;

/// Largest `max_bins` that still leaves room for the missing bin.
pub const MAX_BINS_LIMIT: usize = BinIndex::MAX as usize;

/// Per-feature bin edges. Bin `b` of feature `f` holds finite values `v` with
/// `edges[f][b - 1] < v <= edges[f][b]`; the last edge is `+inf`. Missing
/// values (`NaN`) go to bin `edges[f].len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "BinMapRepr", try_from = "BinMapRepr")]
pub struct BinMap {
    edges: Vec<Vec<f64>>,
}

/// Serialized form: finite cut points only, plus the number of value bins
/// (0 for an all-missing column, otherwise `cuts.len() + 1`).
#[derive(Serialize, Deserialize)]
struct BinMapRepr {
    cuts: Vec<Vec<f64>>,
    value_bins: Vec<usize>,
}

impl From<BinMap> for BinMapRepr {
    fn from(m: BinMap) -> Self {
        let value_bins = m.edges.iter().map(Vec::len).collect();
        let cuts = m
            .edges
            .into_iter()
            .map(|mut e| {
                e.pop();
                e
            })
            .collect();
        Self { cuts, value_bins }
    }
}

impl TryFrom<BinMapRepr> for BinMap {
    type Error = String;

    fn try_from(r: BinMapRepr) -> Result<Self, String> {
        if r.cuts.len() != r.value_bins.len() {
            return Err("bin map cut and count lists differ in length".into());
        }
        let mut edges = Vec::with_capacity(r.cuts.len());
        for (mut cuts, n) in r.cuts.into_iter().zip(r.value_bins) {
            match n {
                0 if cuts.is_empty() => {}
                n if n == cuts.len() + 1 => cuts.push(f64::INFINITY),
                _ => return Err(format!("bin map has {} cuts for {n} bins", cuts.len())),
            }
            if !cuts.windows(2).all(|w| w[0] < w[1]) {
                return Err("bin edges must be strictly increasing".into());
            }
            edges.push(cuts);
        }
        Ok(Self { edges })
    }
}

impl BinMap {
    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self, feature: usize) -> &[f64] {
        &self.edges[feature]
    }

    /// Number of value bins, excluding the missing bin.
    pub fn n_value_bins(&self, feature: usize) -> usize {
        self.edges[feature].len()
    }

    pub fn missing_bin(&self, feature: usize) -> BinIndex {
        self.edges[feature].len() as BinIndex
    }

    pub fn bin(&self, feature: usize, value: f64) -> BinIndex {
        if value.is_nan() {
            return self.missing_bin(feature);
        }
        let edges = &self.edges[feature];
        edges.partition_point(|&e| e < value) as BinIndex
    }

    /// Upper edge of value bin `bin`: `v <= threshold(f, b)` iff `bin(f, v) <= b`.
    pub fn threshold(&self, feature: usize, bin: BinIndex) -> f64 {
        self.edges[feature][bin as usize]
    }

    pub fn bin_matrix(&self, features: &Matrix) -> BinnedMatrix {
        let columns = (0..self.n_features())
            .map(|f| features.iter_rows().map(|row| self.bin(f, row[f])).collect())
            .collect();
        BinnedMatrix {
            n_rows: features.rows(),
            columns,
        }
    }
}

/// Column-major bin indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix {
    pub(crate) n_rows: usize,
    pub(crate) columns: Vec<Vec<BinIndex>>,
}

impl BinnedMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, feature: usize) -> &[BinIndex] {
        &self.columns[feature]
    }
}

/// Builds quantile bins per column. A column with at most `max_bins`
/// distinct finite values gets one bin per value, split at midpoints.
pub fn build_bins(features: &Matrix, max_bins: usize) -> BinMap {
    let max_bins = max_bins.clamp(2, MAX_BINS_LIMIT);
    let edges = (0..features.cols())
        .map(|f| {
            let mut values: Vec<f64> = features
                .iter_rows()
                .map(|r| r[f])
                .filter(|v| !v.is_nan())
                .collect();
            values.sort_by(f64::total_cmp);
            column_edges(&values, max_bins)
        })
        .collect();
    BinMap { edges }
}

fn column_edges(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in sorted {
        match distinct.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let mut edges = Vec::new();
    if distinct.len() <= max_bins {
        edges.extend(distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)));
    } else {
        let n = sorted.len() as f64;
        let mut next_cut = 1usize;
        let mut cum = 0usize;
        for j in 0..distinct.len() - 1 {
            cum += distinct[j].1;
            if next_cut >= max_bins {
                break;
            }
            if cum as f64 >= n * next_cut as f64 / max_bins as f64 {
                edges.push(midpoint(distinct[j].0, distinct[j + 1].0));
                while next_cut < max_bins && cum as f64 >= n * next_cut as f64 / max_bins as f64 {
                    next_cut += 1;
                }
            }
        }
    }
    edges.push(f64::INFINITY);
    edges
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // the midpoint of adjacent floats can round up to b
    if m >= b {
        a
    } else {
        m
    }
}
