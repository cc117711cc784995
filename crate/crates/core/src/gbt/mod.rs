//! Histogram gradient boosting for squared loss.
//!
//! Each round fits a leaf-wise regression tree to the current residuals and
//! adds it with shrinkage. Training stops after `n_estimators` trees or when
//! the validation loss has not improved for `early_stopping_rounds` trees; the
//! ensemble is then truncated at its best validation round.

mod bins;
mod tree;

pub use bins::{build_bins, BinIndex, BinMap, BinnedMatrix, MAX_BINS_LIMIT};
pub use tree::{fit_tree, Node, Tree, MIN_RELATIVE_GAIN, TIE_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub early_stopping_rounds: usize,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
    /// Reserved for row/feature subsampling. The learner itself is
    /// deterministic and does not draw from it.
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: 3000,
            learning_rate: 0.1,
            num_leaves: 31,
            early_stopping_rounds: 50,
            max_bins: 255,
            min_samples_leaf: 20,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::invalid("n_estimators must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.num_leaves < 2 {
            return Err(Error::invalid("num_leaves must be at least 2"));
        }
        if self.early_stopping_rounds == 0 {
            return Err(Error::invalid("early_stopping_rounds must be positive"));
        }
        if self.max_bins < 2 || self.max_bins > MAX_BINS_LIMIT {
            return Err(Error::invalid(format!(
                "max_bins must lie in [2, {MAX_BINS_LIMIT}], got {}",
                self.max_bins
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

/// `base_score + learning_rate · Σ trees`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub bin_map: BinMap,
    /// Validation MSE of the returned ensemble, when a validation set was used.
    pub best_valid_loss: Option<f64>,
}

impl GbtEnsemble {
    /// An ensemble with no trees that always predicts `value`.
    pub fn constant(value: f64, n_features: usize) -> Self {
        Self {
            base_score: value,
            learning_rate: 1.0,
            trees: Vec::new(),
            bin_map: build_bins(&Matrix::zeros(0, n_features), 2),
            best_valid_loss: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.bin_map.n_features()
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(self.predict_row(row))
    }

    /// Unchecked [`GbtEnsemble::predict`] for the hot sampling loop.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        self.base_score + self.learning_rate * sum
    }

    /// Multiplies every output by `c`.
    pub fn scale_outputs(&mut self, c: f64) {
        self.base_score *= c;
        for t in &mut self.trees {
            t.scale_leaves(c);
        }
    }
}

/// Per-round losses recorded while boosting. Entry `i` is the loss of the
/// ensemble with `i` trees.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub best_iteration: usize,
}

/// Training features binned once, reusable across several target columns.
#[derive(Debug, Clone)]
pub struct BinnedTrainingSet {
    pub bin_map: BinMap,
    pub binned: BinnedMatrix,
}

impl BinnedTrainingSet {
    pub fn new(features: &Matrix, max_bins: usize) -> Self {
        let bin_map = build_bins(features, max_bins);
        let binned = bin_map.bin_matrix(features);
        Self { bin_map, binned }
    }

    pub fn n_rows(&self) -> usize {
        self.binned.n_rows()
    }
}

pub fn fit_gbt(
    train_features: &Matrix,
    train_targets: &[f64],
    valid: Option<(&Matrix, &[f64])>,
    params: &GbtParams,
) -> Result<GbtEnsemble> {
    params.validate()?;
    let set = BinnedTrainingSet::new(train_features, params.max_bins);
    fit_binned(&set, train_targets, valid, params).map(|(e, _)| e)
}

pub fn fit_binned(
    set: &BinnedTrainingSet,
    targets: &[f64],
    valid: Option<(&Matrix, &[f64])>,
    params: &GbtParams,
) -> Result<(GbtEnsemble, TrainingTrace)> {
    params.validate()?;
    let n = set.n_rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if targets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: targets.len(),
        });
    }
    if let Some((vx, vy)) = valid {
        if vx.cols() != set.bin_map.n_features() {
            return Err(Error::DimensionMismatch {
                expected: set.bin_map.n_features(),
                got: vx.cols(),
            });
        }
        if vx.rows() != vy.len() {
            return Err(Error::DimensionMismatch {
                expected: vx.rows(),
                got: vy.len(),
            });
        }
        if vx.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
    }

    let base_score = targets.iter().sum::<f64>() / n as f64;
    let lr = params.learning_rate;
    let mut preds = vec![base_score; n];
    let mut residuals = vec![0.0; n];
    let mut valid_preds = valid.map(|(vx, _)| vec![base_score; vx.rows()]);
    let mut trace = TrainingTrace::default();
    trace.train_loss.push(mse(&preds, targets));
    let mut best_valid = None;
    if let (Some((_, vy)), Some(vp)) = (valid, &valid_preds) {
        let l = mse(vp, vy);
        trace.valid_loss.push(l);
        best_valid = Some(l);
    }

    let mut trees = Vec::new();
    let all_rows: Vec<u32> = (0..n as u32).collect();
    while trees.len() < params.n_estimators {
        for ((r, t), p) in residuals.iter_mut().zip(targets).zip(&preds) {
            *r = t - p;
        }
        let grown = tree::grow_tree(
            &set.binned,
            &set.bin_map,
            &residuals,
            all_rows.clone(),
            params.num_leaves,
            params.min_samples_leaf,
        );
        if grown.leaves.len() < 2 {
            break;
        }
        for (value, rows) in &grown.leaves {
            for &r in rows {
                preds[r as usize] += lr * value;
            }
        }
        trace.train_loss.push(mse(&preds, targets));

        let tree = grown.tree;
        if let (Some((vx, vy)), Some(vp)) = (valid, valid_preds.as_mut()) {
            for (p, row) in vp.iter_mut().zip(vx.iter_rows()) {
                *p += lr * tree.predict(row);
            }
            trees.push(tree);
            let l = mse(vp, vy);
            trace.valid_loss.push(l);
            if best_valid.is_none_or(|b| l < b) {
                best_valid = Some(l);
                trace.best_iteration = trees.len();
            } else if trees.len() - trace.best_iteration >= params.early_stopping_rounds {
                break;
            }
        } else {
            trees.push(tree);
            trace.best_iteration = trees.len();
        }
    }
    trees.truncate(trace.best_iteration);

    Ok((
        GbtEnsemble {
            base_score,
            learning_rate: lr,
            trees,
            bin_map: set.bin_map.clone(),
            best_valid_loss: best_valid,
        },
        trace,
    ))
}

fn mse(preds: &[f64], targets: &[f64]) -> f64 {
    preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / preds.len() as f64
}
