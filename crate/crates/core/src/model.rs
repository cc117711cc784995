//! Conditional score model: one boosted ensemble per response dimension,
//! trained by denoising score matching, and a reverse-time Euler–Maruyama
//! sampler that turns the learned score into draws from `p(y | x)`.
//!
//! Ensemble `k` sees inputs `[y_t | t | x]` and is trained on the target
//! `−ζ_k`, where `y_t = y + σ(t) ζ`. The score is then `U(y_t, t, x) / σ(t)`.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fit_scaler, split_indices, Dataset, ResponseScaler, SplitSpec};
use crate::diffusion::SdeConfig;
use crate::gbt::{fit_binned, BinnedTrainingSet, GbtEnsemble, GbtParams};
use crate::metrics::{empirical_quantile, SampleSet};
use crate::{rng, Error, Matrix, Result};

/// How the ensembles' output relates to the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreParam {
    /// Targets are the unit-scale noise `−ζ`; score = `U / σ(t)`.
    #[default]
    NoiseScaled,
    /// Targets are the raw conditional score `−ζ / σ(t)`; score = `U`.
    Unscaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeffuserConfig {
    pub n_repeats: usize,
    pub sde: SdeConfig,
    pub gbt: GbtParams,
    pub validation_fraction: f64,
    pub seed: u64,
    pub score_param: ScoreParam,
}

impl Default for TreeffuserConfig {
    fn default() -> Self {
        Self {
            n_repeats: 30,
            sde: SdeConfig::default(),
            gbt: GbtParams::default(),
            validation_fraction: 0.2,
            seed: 0,
            score_param: ScoreParam::NoiseScaled,
        }
    }
}

impl TreeffuserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_repeats == 0 {
            return Err(Error::invalid("n_repeats must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        self.sde.validate()?;
        self.gbt.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub seed: u64,
    /// Turning this off leaves only the drift term (used in tests).
    pub inject_noise: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 50,
            seed: 0,
            inject_noise: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        Ok(())
    }
}

/// Noised copies of a dataset with their regression targets. Input columns
/// are `[y_t (d_y) | t | x (d_x)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTrainingTable {
    pub inputs: Matrix,
    pub targets: Matrix,
    /// Dataset row each table row was generated from.
    pub sources: Vec<usize>,
}

impl ScoreTrainingTable {
    pub fn n_rows(&self) -> usize {
        self.inputs.rows()
    }

    pub fn t_column(&self) -> usize {
        self.targets.cols()
    }
}

/// For every row draws `n_repeats` pairs `t ~ U[0, T]`, `ζ ~ N(0, I)`; one
/// draw of `ζ` is shared by all response dimensions of a copy.
pub fn build_training_table(
    d: &Dataset,
    cfg: &TreeffuserConfig,
    rng: &mut rng::Rng,
) -> Result<ScoreTrainingTable> {
    if cfg.n_repeats == 0 {
        return Err(Error::invalid("n_repeats must be at least 1"));
    }
    let (d_x, d_y) = (d.d_x(), d.d_y());
    let width = d_y + 1 + d_x;
    let rows = d.n_rows() * cfg.n_repeats;
    let mut inputs = Vec::with_capacity(rows * width);
    let mut targets = Vec::with_capacity(rows * d_y);
    let mut sources = Vec::with_capacity(rows);
    let mut zeta = vec![0.0; d_y];
    for i in 0..d.n_rows() {
        let y = d.responses().row(i);
        let x = d.features().row(i);
        for _ in 0..cfg.n_repeats {
            let t = rng.random::<f64>() * cfg.sde.horizon;
            for z in &mut zeta {
                *z = rng.sample(StandardNormal);
            }
            let sigma = cfg.sde.sigma(t);
            inputs.extend(y.iter().zip(&zeta).map(|(y, z)| y + sigma * z));
            inputs.push(t);
            inputs.extend_from_slice(x);
            match cfg.score_param {
                ScoreParam::NoiseScaled => targets.extend(zeta.iter().map(|z| -z)),
                ScoreParam::Unscaled => targets.extend(zeta.iter().map(|z| -z / sigma)),
            }
            sources.push(i);
        }
    }
    Ok(ScoreTrainingTable {
        inputs: Matrix::new(rows, width, inputs)?,
        targets: Matrix::new(rows, d_y, targets)?,
        sources,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeffuserModel {
    pub ensembles: Vec<GbtEnsemble>,
    pub sde: SdeConfig,
    pub scaler: ResponseScaler,
    pub d_x: usize,
    pub d_y: usize,
    pub score_param: ScoreParam,
    pub feature_names: Vec<String>,
    pub response_names: Vec<String>,
}

/// Summary of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub trees_per_dim: Vec<usize>,
    pub best_valid_loss: Vec<Option<f64>>,
    pub train_table_rows: usize,
    pub valid_table_rows: usize,
}

pub fn train(d: &Dataset, cfg: &TreeffuserConfig) -> Result<TreeffuserModel> {
    train_with_report(d, cfg).map(|(m, _)| m)
}

/// Standardizes responses, holds out a validation part, builds a noised
/// table for each part and fits the `d_y` ensembles with early stopping on
/// the validation table.
pub fn train_with_report(d: &Dataset, cfg: &TreeffuserConfig) -> Result<(TreeffuserModel, TrainReport)> {
    cfg.validate()?;
    let scaler = fit_scaler(d)?;
    let standardized = d.map_responses(|y| scaler.apply(y))?;
    let (train_idx, valid_idx) = split_indices(
        d.n_rows(),
        &SplitSpec {
            validation_fraction: cfg.validation_fraction,
            seed: cfg.seed,
        },
    )?;
    let train_part = standardized.select(&train_idx)?;
    let valid_part = standardized.select(&valid_idx)?;
    let train_table = build_training_table(&train_part, cfg, &mut rng::stream(cfg.seed, 1))?;
    let valid_table = build_training_table(&valid_part, cfg, &mut rng::stream(cfg.seed, 2))?;

    let set = BinnedTrainingSet::new(&train_table.inputs, cfg.gbt.max_bins);
    let ensembles = (0..d.d_y())
        .into_par_iter()
        .map(|k| {
            let targets = train_table.targets.column(k);
            let valid_targets = valid_table.targets.column(k);
            fit_binned(&set, &targets, Some((&valid_table.inputs, &valid_targets)), &cfg.gbt).map(|(e, _)| e)
        })
        .collect::<Result<Vec<_>>>()?;

    let report = TrainReport {
        trees_per_dim: ensembles.iter().map(|e| e.trees.len()).collect(),
        best_valid_loss: ensembles.iter().map(|e| e.best_valid_loss).collect(),
        train_table_rows: train_table.n_rows(),
        valid_table_rows: valid_table.n_rows(),
    };
    let model = TreeffuserModel {
        ensembles,
        sde: cfg.sde,
        scaler,
        d_x: d.d_x(),
        d_y: d.d_y(),
        score_param: cfg.score_param,
        feature_names: d.feature_names().to_vec(),
        response_names: d.response_names().to_vec(),
    };
    Ok((model, report))
}

impl TreeffuserModel {
    /// Score of `p_t(y | x)` in standardized response units.
    pub fn score(&self, y: &[f64], t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.d_y {
            return Err(Error::DimensionMismatch {
                expected: self.d_y,
                got: y.len(),
            });
        }
        if x.len() != self.d_x {
            return Err(Error::DimensionMismatch {
                expected: self.d_x,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.d_y];
        self.score_into(y, t, x, self.sde.sigma(t), &mut out);
        Ok(out)
    }

    fn score_into(&self, y: &[f64], t: f64, x: &[f64], sigma: f64, out: &mut [f64]) {
        let mut input = Vec::with_capacity(self.d_y + 1 + self.d_x);
        input.extend_from_slice(y);
        input.push(t);
        input.extend_from_slice(x);
        for (o, e) in out.iter_mut().zip(&self.ensembles) {
            let u = e.predict_row(&input);
            *o = match self.score_param {
                ScoreParam::NoiseScaled => u / sigma,
                ScoreParam::Unscaled => u,
            };
        }
    }

    /// `n_samples` draws from `p(y | x)` in original response units.
    pub fn sample(&self, x: &[f64], n_samples: usize, sc: &SamplerConfig) -> Result<SampleSet> {
        self.sample_keyed(x, n_samples, sc, 0)
    }

    fn sample_keyed(&self, x: &[f64], n_samples: usize, sc: &SamplerConfig, row_key: u64) -> Result<SampleSet> {
        if x.len() != self.d_x {
            return Err(Error::DimensionMismatch {
                expected: self.d_x,
                got: x.len(),
            });
        }
        let score = |y: &[f64], t: f64, x: &[f64], out: &mut [f64]| {
            self.score_into(y, t, x, self.sde.sigma(t), out)
        };
        let standardized = sample_paths(score, &self.sde, self.d_y, x, n_samples, sc, row_key)?;
        let rows = standardized
            .iter_rows()
            .map(|z| self.scaler.invert(z))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet::new(Matrix::from_rows(self.d_y, rows)?)?.with_x(x))
    }

    /// Samples every row of `xs`. Row `i` uses random streams keyed by `i`,
    /// so results do not depend on scheduling.
    pub fn sample_rows(&self, xs: &Matrix, n_samples: usize, sc: &SamplerConfig) -> Result<Vec<SampleSet>> {
        (0..xs.rows())
            .into_par_iter()
            .map(|i| self.sample_keyed(xs.row(i), n_samples, sc, i as u64))
            .collect()
    }

    pub fn predict_mean(&self, x: &[f64], n_samples: usize, sc: &SamplerConfig) -> Result<Vec<f64>> {
        Ok(self.sample(x, n_samples, sc)?.mean())
    }

    pub fn predict_quantile(&self, x: &[f64], q: f64, n_samples: usize, sc: &SamplerConfig) -> Result<Vec<f64>> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("quantile level {q} is outside (0, 1)")));
        }
        let s = self.sample(x, n_samples, sc)?;
        (0..self.d_y).map(|k| empirical_quantile(&s.column(k), q)).collect()
    }
}

/// Reverse-time Euler–Maruyama with a caller-supplied score
/// `score_fn(y, t, x, out)`. Starts from `p_simple` at `t = T` and takes
/// `n_steps` steps of size `δ = T / n_steps`; the score is evaluated at
/// `T, T − δ, …, δ`. No scaler inversion is applied.
pub fn sample_with_score<F>(
    score_fn: F,
    sde: &SdeConfig,
    d_y: usize,
    x: &[f64],
    n_samples: usize,
    sc: &SamplerConfig,
) -> Result<SampleSet>
where
    F: Fn(&[f64], f64, &[f64], &mut [f64]) + Sync,
{
    let draws = sample_paths(score_fn, sde, d_y, x, n_samples, sc, 0)?;
    Ok(SampleSet::new(draws)?.with_x(x))
}

fn sample_paths<F>(
    score_fn: F,
    sde: &SdeConfig,
    d_y: usize,
    x: &[f64],
    n_samples: usize,
    sc: &SamplerConfig,
    row_key: u64,
) -> Result<Matrix>
where
    F: Fn(&[f64], f64, &[f64], &mut [f64]) + Sync,
{
    sc.validate()?;
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    if d_y == 0 {
        return Err(Error::invalid("d_y must be at least 1"));
    }
    let delta = sde.horizon / sc.n_steps as f64;
    let sqrt_delta = delta.sqrt();
    let path = |s: usize| -> Result<Vec<f64>> {
        let mut rng = rng::stream(sc.seed, (row_key << 32) ^ s as u64);
        let mut y = sde.sample_p_simple(d_y, &mut rng);
        let mut score = vec![0.0; d_y];
        for i in 0..sc.n_steps {
            let t = sde.horizon - i as f64 * delta;
            score_fn(&y, t, x, &mut score);
            let g = sde.g(t);
            let drift = sde.drift(&y, t);
            for k in 0..d_y {
                let w: f64 = rng.sample(StandardNormal);
                // reverse drift f − g² ∇log p, integrated backwards over δ
                y[k] -= (drift[k] - g * g * score[k]) * delta;
                if sc.inject_noise {
                    y[k] -= g * sqrt_delta * w;
                }
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
        }
        Ok(y)
    };
    let rows = (0..n_samples)
        .into_par_iter()
        .map(path)
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(d_y, rows)
}

pub const MODEL_FORMAT: &str = "treeffuser-model";
pub const MODEL_VERSION: u64 = 1;

#[derive(Serialize)]
struct ModelFileOut<'a> {
    format: &'a str,
    version: u64,
    model: &'a TreeffuserModel,
}

pub fn model_to_json(m: &TreeffuserModel) -> Result<String> {
    Ok(serde_json::to_string(&ModelFileOut {
        format: MODEL_FORMAT,
        version: MODEL_VERSION,
        model: m,
    })?)
}

/// Checks the format tag and version before decoding the payload.
pub fn model_from_json(s: &str) -> Result<TreeffuserModel> {
    let mut doc: serde_json::Value = serde_json::from_str(s)?;
    let format = doc.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != MODEL_FORMAT {
        return Err(Error::BadMagic {
            expected: MODEL_FORMAT.to_string(),
            found: format.to_string(),
        });
    }
    let version = doc
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::invalid("model file has no version"))?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let payload = doc
        .get_mut("model")
        .map(serde_json::Value::take)
        .ok_or_else(|| Error::invalid("model file has no payload"))?;
    let model: TreeffuserModel = serde_json::from_value(payload)?;
    if model.ensembles.len() != model.d_y
        || model.ensembles.iter().any(|e| e.n_features() != model.d_y + 1 + model.d_x)
    {
        return Err(Error::invalid("model payload has inconsistent dimensions"));
    }
    Ok(model)
}

pub fn save_model(m: &TreeffuserModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TreeffuserModel> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&s)
}
