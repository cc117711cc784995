//! Sample-based evaluation of predictive distributions.
//!
//! All quantiles use the lower empirical rule: the `⌈q·m⌉`-th smallest of
//! `m` draws.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Draws from a predictive distribution, one row per draw, in original
/// response units.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub draws: Matrix,
    pub x_ref: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(draws: Matrix) -> Result<Self> {
        if draws.rows() == 0 {
            return Err(Error::invalid("a sample set needs at least one draw"));
        }
        if draws.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample draws must be finite"));
        }
        Ok(Self { draws, x_ref: None })
    }

    pub fn from_scalars(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(Matrix::new(n, 1, values)?)
    }

    pub fn with_x(mut self, x: &[f64]) -> Self {
        self.x_ref = Some(x.to_vec());
        self
    }

    pub fn n_samples(&self) -> usize {
        self.draws.rows()
    }

    pub fn d_y(&self) -> usize {
        self.draws.cols()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.column(k)
    }

    pub fn mean(&self) -> Vec<f64> {
        let m = self.n_samples() as f64;
        (0..self.d_y())
            .map(|k| self.draws.iter_rows().map(|r| r[k]).sum::<f64>() / m)
            .collect()
    }

    pub fn quantile(&self, q: f64) -> Result<Vec<f64>> {
        (0..self.d_y())
            .map(|k| empirical_quantile(&self.column(k), q))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub crps: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mace: f64,
    pub n_test: usize,
}

impl EvalReport {
    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        format!(
            "crps={:?}\nrmse={:?}\nmae={:?}\nmace={:?}\nn_test={}\n",
            self.crps, self.rmse, self.mae, self.mace, self.n_test
        )
    }
}

/// Empirical CRPS in energy form, `E|X − y| − ½ E|X − X'|`, with the
/// all-pairs `1/(2m²)` normalization. Runs in `O(m log m)`.
pub fn crps_empirical(samples: &[f64], y: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("CRPS of an empty sample set"));
    }
    let m = samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_term = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
    // Σ_i Σ_j |x_i − x_j| = 2 Σ_i (2i − m + 1) x_(i) over sorted draws
    let pair_term = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - m + 1.0) * x)
        .sum::<f64>()
        / (m * m);
    Ok((abs_term - pair_term).max(0.0))
}

/// Mean over dimensions of the marginal CRPS.
pub fn crps_multivariate(s: &SampleSet, y: &[f64]) -> Result<f64> {
    if y.len() != s.d_y() {
        return Err(Error::DimensionMismatch {
            expected: s.d_y(),
            got: y.len(),
        });
    }
    let mut total = 0.0;
    for (k, yk) in y.iter().enumerate() {
        total += crps_empirical(&s.column(k), *yk)?;
    }
    Ok(total / y.len() as f64)
}

pub fn empirical_quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("quantile of an empty sample set"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile level {q} is outside (0, 1)")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_index(sorted.len(), q)])
}

fn quantile_index(m: usize, q: f64) -> usize {
    // guard against q·m landing a hair above an integer
    let pos = (q * m as f64 - 1e-9).ceil() as usize;
    pos.clamp(1, m) - 1
}

/// The 19 levels `0.05, 0.10, …, 0.95`.
pub fn default_mace_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Mean absolute calibration error: average over levels `q` of
/// `|coverage(q) − q|`, where `coverage(q)` is the fraction of rows whose
/// truth lies at or below the predicted `q`-quantile. Multi-output rows
/// contribute one observation per dimension.
pub fn mace(sample_sets: &[SampleSet], y_true: &[Vec<f64>], levels: &[f64]) -> Result<f64> {
    if sample_sets.len() != y_true.len() {
        return Err(Error::DimensionMismatch {
            expected: sample_sets.len(),
            got: y_true.len(),
        });
    }
    if sample_sets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if levels.is_empty() || levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(Error::invalid("calibration levels must be a non-empty subset of (0, 1)"));
    }
    // sort each marginal once
    let mut marginals = Vec::new();
    for (s, y) in sample_sets.iter().zip(y_true) {
        if y.len() != s.d_y() {
            return Err(Error::DimensionMismatch {
                expected: s.d_y(),
                got: y.len(),
            });
        }
        for (k, yk) in y.iter().enumerate() {
            let mut col = s.column(k);
            col.sort_by(f64::total_cmp);
            marginals.push((col, *yk));
        }
    }
    let total = marginals.len() as f64;
    let err: f64 = levels
        .iter()
        .map(|&q| {
            let covered = marginals
                .iter()
                .filter(|(sorted, y)| *y <= sorted[quantile_index(sorted.len(), q)])
                .count();
            (covered as f64 / total - q).abs()
        })
        .sum();
    Ok(err / levels.len() as f64)
}

fn check_aligned(preds: &[f64], y_true: &[f64]) -> Result<()> {
    if preds.len() != y_true.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Over all entries; multi-output predictions are passed flattened.
pub fn rmse(preds: &[f64], y_true: &[f64]) -> Result<f64> {
    check_aligned(preds, y_true)?;
    let s: f64 = preds.iter().zip(y_true).map(|(p, y)| (p - y).powi(2)).sum();
    Ok((s / preds.len() as f64).sqrt())
}

pub fn mae(preds: &[f64], y_true: &[f64]) -> Result<f64> {
    check_aligned(preds, y_true)?;
    let s: f64 = preds.iter().zip(y_true).map(|(p, y)| (p - y).abs()).sum();
    Ok(s / preds.len() as f64)
}

fn check_prices(price: f64, cost: f64) -> Result<()> {
    if !(cost > 0.0 && cost < price && price.is_finite()) {
        return Err(Error::invalid(format!(
            "newsvendor needs 0 < cost < price, got cost {cost} and price {price}"
        )));
    }
    Ok(())
}

/// Order quantity at the critical ratio `(p − c) / p` of the demand samples.
pub fn newsvendor_order(samples: &[f64], price: f64, cost: f64) -> Result<f64> {
    check_prices(price, cost)?;
    empirical_quantile(samples, (price - cost) / price)
}

/// Realized single-period profit `p·min(q, demand) − c·q`.
pub fn newsvendor_profit(order: f64, demand: f64, price: f64, cost: f64) -> f64 {
    price * order.min(demand) - cost * order
}
