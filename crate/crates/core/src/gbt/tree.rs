//! Regression trees grown leaf-wise on histogram statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bins::{BinIndex, BinMap, BinnedMatrix};

/// Relative gain margin within which two split candidates count as tied.
/// Ties go to the lowest feature index, then the lowest bin, then missing-left.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// A split must reduce the node's sum of squares by more than this fraction
/// of it. Filters out rounding noise on (near-)constant residuals.
pub const MIN_RELATIVE_GAIN: f64 = 1e-12;

/// Rows per leaf above which histogram construction fans out over features.
const PARALLEL_ROWS: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        bin: BinIndex,
        #[serde(with = "threshold_repr")]
        threshold: f64,
        default_left: bool,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// `+inf` thresholds (splits that only separate missing values) are written
/// as the string `"inf"`, which JSON numbers cannot express.
mod threshold_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad threshold '{t}'"))),
        }
    }
}

/// Binary tree stored as a node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// `(feature, bin, default_left)` of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, BinIndex, bool)> {
        match self.nodes[0] {
            Node::Split {
                feature,
                bin,
                default_left,
                ..
            } => Some((feature as usize, bin, default_left)),
            Node::Leaf { .. } => None,
        }
    }

    /// Evaluates the tree on raw feature values; `NaN` follows the stored
    /// default direction.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = row[feature as usize];
                    let go_left = if v.is_nan() { default_left } else { v <= threshold };
                    i = if go_left { left } else { right } as usize;
                }
            }
        }
    }

    pub(crate) fn scale_leaves(&mut self, c: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= c;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Stats {
    pub count: u32,
    pub sum: f64,
}

impl Stats {
    fn add(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
    }

    fn plus(self, o: Stats) -> Stats {
        Stats {
            count: self.count + o.count,
            sum: self.sum + o.sum,
        }
    }

    fn minus(self, o: Stats) -> Stats {
        Stats {
            count: self.count - o.count,
            sum: self.sum - o.sum,
        }
    }

    /// `sum² / count`; the node's sum of squares is `Σr² − sum²/count`.
    fn score(self) -> f64 {
        self.sum * self.sum / self.count as f64
    }
}

/// Per-feature bin statistics; the last entry of each feature is its
/// missing bin.
#[derive(Debug, Clone)]
struct Histogram {
    features: Vec<Vec<Stats>>,
}

impl Histogram {
    fn build(binned: &BinnedMatrix, bin_map: &BinMap, rows: &[u32], residuals: &[f64]) -> Self {
        let one = |f: usize| {
            let mut h = vec![Stats::default(); bin_map.n_value_bins(f) + 1];
            let col = binned.column(f);
            for &r in rows {
                h[col[r as usize] as usize].add(residuals[r as usize]);
            }
            h
        };
        let features = if rows.len() >= PARALLEL_ROWS && binned.n_features() > 1 {
            (0..binned.n_features()).into_par_iter().map(one).collect()
        } else {
            (0..binned.n_features()).map(one).collect()
        };
        Self { features }
    }

    fn minus(&self, child: &Histogram) -> Self {
        let features = self
            .features
            .iter()
            .zip(&child.features)
            .map(|(p, c)| p.iter().zip(c).map(|(a, b)| a.minus(*b)).collect())
            .collect();
        Self { features }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitCandidate {
    pub feature: usize,
    pub bin: BinIndex,
    pub default_left: bool,
    pub gain: f64,
}

pub(crate) fn improves(gain: f64, incumbent: Option<f64>) -> bool {
    match incumbent {
        None => true,
        Some(best) => gain > best + TIE_TOLERANCE * best.abs(),
    }
}

/// Split gain as the reduction in sum of squared deviations.
pub(crate) fn split_gain(left: Stats, right: Stats, total: Stats) -> f64 {
    left.score() + right.score() - total.score()
}

fn best_split(
    hist: &Histogram,
    total: Stats,
    sum_sq: f64,
    min_samples_leaf: u32,
) -> Option<SplitCandidate> {
    if total.count < 2 * min_samples_leaf.max(1) {
        return None;
    }
    let centered_ss = (sum_sq - total.score()).max(0.0);
    let min_gain = MIN_RELATIVE_GAIN * sum_sq;
    if centered_ss <= min_gain {
        return None;
    }
    let min_leaf = min_samples_leaf.max(1);
    let mut best: Option<SplitCandidate> = None;
    for (f, bins) in hist.features.iter().enumerate() {
        let n_value = bins.len() - 1;
        let missing = bins[n_value];
        let mut left_values = Stats::default();
        for (b, stats) in bins[..n_value].iter().enumerate() {
            left_values = left_values.plus(*stats);
            let directions: &[bool] = if missing.count > 0 { &[true, false] } else { &[true] };
            for &default_left in directions {
                let left = if default_left {
                    left_values.plus(missing)
                } else {
                    left_values
                };
                let right = total.minus(left);
                if left.count < min_leaf || right.count < min_leaf {
                    continue;
                }
                let gain = split_gain(left, right, total);
                if gain > min_gain && improves(gain, best.map(|c| c.gain)) {
                    best = Some(SplitCandidate {
                        feature: f,
                        bin: b as BinIndex,
                        default_left,
                        gain,
                    });
                }
            }
        }
    }
    best
}

struct OpenLeaf {
    node: usize,
    rows: Vec<u32>,
    hist: Histogram,
    total: Stats,
    best: Option<SplitCandidate>,
}

impl OpenLeaf {
    fn new(
        node: usize,
        rows: Vec<u32>,
        hist: Histogram,
        residuals: &[f64],
        min_samples_leaf: u32,
    ) -> Self {
        let mut total = Stats::default();
        let mut sum_sq = 0.0;
        for &r in &rows {
            let v = residuals[r as usize];
            total.add(v);
            sum_sq += v * v;
        }
        let best = best_split(&hist, total, sum_sq, min_samples_leaf);
        Self {
            node,
            rows,
            hist,
            total,
            best,
        }
    }

    fn value(&self) -> f64 {
        if self.total.count == 0 {
            0.0
        } else {
            self.total.sum / self.total.count as f64
        }
    }
}

/// A fitted tree plus the training rows that landed in each leaf.
pub(crate) struct GrownTree {
    pub tree: Tree,
    pub leaves: Vec<(f64, Vec<u32>)>,
}

/// Grows a tree on `rows` best-first: the open leaf with the largest gain is
/// split until `num_leaves` is reached or no split has positive gain. Leaf
/// values are mean residuals.
pub(crate) fn grow_tree(
    binned: &BinnedMatrix,
    bin_map: &BinMap,
    residuals: &[f64],
    rows: Vec<u32>,
    num_leaves: usize,
    min_samples_leaf: usize,
) -> GrownTree {
    let msl = min_samples_leaf.min(u32::MAX as usize) as u32;
    let hist = Histogram::build(binned, bin_map, &rows, residuals);
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut open = vec![OpenLeaf::new(0, rows, hist, residuals, msl)];

    while open.len() < num_leaves {
        let mut pick: Option<(usize, f64)> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(c) = leaf.best {
                if improves(c.gain, pick.map(|p| p.1)) {
                    pick = Some((i, c.gain));
                }
            }
        }
        let Some((i, _)) = pick else { break };
        let parent = open.remove(i);
        let split = parent.best.expect("picked leaf has a split");
        let col = binned.column(split.feature);
        let missing = bin_map.missing_bin(split.feature);
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = parent.rows.iter().partition(|&&r| {
            let b = col[r as usize];
            if b == missing {
                split.default_left
            } else {
                b <= split.bin
            }
        });

        let (left_hist, right_hist) = if left_rows.len() <= right_rows.len() {
            let small = Histogram::build(binned, bin_map, &left_rows, residuals);
            let large = parent.hist.minus(&small);
            (small, large)
        } else {
            let small = Histogram::build(binned, bin_map, &right_rows, residuals);
            let large = parent.hist.minus(&small);
            (large, small)
        };

        let left_node = nodes.len();
        let right_node = left_node + 1;
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[parent.node] = Node::Split {
            feature: split.feature as u32,
            bin: split.bin,
            threshold: bin_map.threshold(split.feature, split.bin),
            default_left: split.default_left,
            left: left_node as u32,
            right: right_node as u32,
        };
        let left = OpenLeaf::new(left_node, left_rows, left_hist, residuals, msl);
        let right = OpenLeaf::new(right_node, right_rows, right_hist, residuals, msl);
        // keep creation order stable so leaf tie-breaking is reproducible
        open.insert(i, left);
        open.insert(i + 1, right);
    }

    let mut leaves = Vec::with_capacity(open.len());
    for leaf in open {
        let value = leaf.value();
        nodes[leaf.node] = Node::Leaf { value };
        leaves.push((value, leaf.rows));
    }
    GrownTree {
        tree: Tree { nodes },
        leaves,
    }
}

/// Fits one tree to `residuals` over all rows of `binned`.
pub fn fit_tree(
    binned: &BinnedMatrix,
    bin_map: &BinMap,
    residuals: &[f64],
    num_leaves: usize,
    min_samples_leaf: usize,
) -> Tree {
    let rows = (0..binned.n_rows() as u32).collect();
    grow_tree(binned, bin_map, residuals, rows, num_leaves, min_samples_leaf).tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbt::bins::build_bins;
    use crate::Matrix;

    fn fit(x: &[Vec<f64>], r: &[f64], leaves: usize, msl: usize) -> (Tree, BinMap) {
        let m = Matrix::from_rows(x[0].len(), x).unwrap();
        let map = build_bins(&m, 255);
        let binned = map.bin_matrix(&m);
        (fit_tree(&binned, &map, r, leaves, msl), map)
    }

    #[test]
    fn constant_residuals_give_single_leaf() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let (t, _) = fit(&x, &[0.3; 40], 31, 1);
        assert_eq!(t.n_leaves(), 1);
        assert!((t.predict(&[1.0, 2.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn two_point_split() {
        let (t, map) = fit(&[vec![0.0], vec![1.0]], &[0.0, 1.0], 2, 1);
        assert_eq!(t.root_split(), Some((0, 0, true)));
        assert_eq!(map.threshold(0, 0), 0.5);
        assert_eq!(t.predict(&[0.0]), 0.0);
        assert_eq!(t.predict(&[1.0]), 1.0);
    }

    #[test]
    fn two_clusters_split_between() {
        let x = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.2]];
        let r = [1.0, 2.0, 10.0, 12.0];
        let (t, _) = fit(&x, &r, 2, 1);
        let (f, b, _) = t.root_split().unwrap();
        assert_eq!((f, b), (0, 1));
        assert_eq!(t.predict(&[0.05]), 1.5);
        assert_eq!(t.predict(&[5.1]), 11.0);
    }

    #[test]
    fn missing_rows_follow_gain_maximizing_side() {
        // missing rows carry large residuals, like the right cluster
        let x = vec![
            vec![0.0],
            vec![0.0],
            vec![1.0],
            vec![1.0],
            vec![f64::NAN],
            vec![f64::NAN],
        ];
        let r = [0.0, 0.0, 5.0, 5.0, 5.0, 5.0];
        let (t, _) = fit(&x, &r, 2, 1);
        let (_, _, default_left) = t.root_split().unwrap();
        assert!(!default_left);
        assert_eq!(t.predict(&[f64::NAN]), 5.0);
    }

    #[test]
    fn all_missing_feature_is_never_split() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::NAN, i as f64]).collect();
        let r: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let (t, _) = fit(&x, &r, 4, 1);
        for n in t.nodes() {
            if let Node::Split { feature, .. } = n {
                assert_eq!(*feature, 1);
            }
        }
    }

    #[test]
    fn leaf_budget_and_min_samples() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let r: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        let m = Matrix::from_rows(1, &x).unwrap();
        let map = build_bins(&m, 255);
        let binned = map.bin_matrix(&m);
        let g = grow_tree(&binned, &map, &r, (0..100).collect(), 7, 10);
        assert!(g.tree.n_leaves() <= 7);
        assert!(g.leaves.iter().all(|(_, rows)| rows.len() >= 10));
        // mean-fitting conservation
        let total: f64 = g.leaves.iter().map(|(v, rows)| v * rows.len() as f64).sum();
        assert!((total - r.iter().sum::<f64>()).abs() < 1e-9);
        // too few rows for two leaves of 60
        assert_eq!(fit_tree(&binned, &map, &r, 31, 60).n_leaves(), 1);
    }
}
