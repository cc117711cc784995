//! Option layers shared by flags and the TOML config file. Every field is
//! optional so a flag can override a file value, which overrides the default.

use clap::{Args, ValueEnum};
use serde::Deserialize;
use treeffuser::model::{SamplerConfig, ScoreParam, TreeffuserConfig};

use crate::CliError;

/// Fills every `None` in `self` from `lower`.
pub trait Layer {
    fn over(self, lower: Self) -> Self;
}

macro_rules! layered {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl Layer for $ty {
            fn over(self, lower: Self) -> Self {
                Self { $($field: self.$field.or(lower.$field)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreArg {
    NoiseScaled,
    Unscaled,
}

impl From<ScoreArg> for ScoreParam {
    fn from(a: ScoreArg) -> Self {
        match a {
            ScoreArg::NoiseScaled => ScoreParam::NoiseScaled,
            ScoreArg::Unscaled => ScoreParam::Unscaled,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOpts {
    /// Noised copies per training row [default: 30]
    #[arg(long)]
    pub n_repeats: Option<usize>,
    /// Fraction of rows held out for early stopping [default: 0.2]
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Seed for the split and the noise draws [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Score parametrization [default: noise-scaled]
    #[arg(long, value_enum)]
    pub score_param: Option<ScoreArg>,
}
layered!(TrainOpts { n_repeats, validation_fraction, seed, score_param });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtOpts {
    /// Maximum boosting rounds per response dimension [default: 3000]
    #[arg(long)]
    pub n_estimators: Option<usize>,
    /// Shrinkage [default: 0.1]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Leaf budget per tree [default: 31]
    #[arg(long)]
    pub num_leaves: Option<usize>,
    /// Rounds without validation improvement before stopping [default: 50]
    #[arg(long)]
    pub early_stopping_rounds: Option<usize>,
    /// Histogram bins per feature [default: 255]
    #[arg(long)]
    pub max_bins: Option<usize>,
    /// Minimum rows per leaf [default: 20]
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
}
layered!(GbtOpts { n_estimators, learning_rate, num_leaves, early_stopping_rounds, max_bins, min_samples_leaf });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeOpts {
    /// Smallest noise scale [default: 0.01]
    #[arg(long)]
    pub alpha_min: Option<f64>,
    /// Largest noise scale [default: 20]
    #[arg(long)]
    pub alpha_max: Option<f64>,
    /// Diffusion horizon T [default: 1]
    #[arg(long)]
    pub horizon: Option<f64>,
}
layered!(SdeOpts { alpha_min, alpha_max, horizon });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerOpts {
    /// Reverse-diffusion steps [default: 50]
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Sampler seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}
layered!(SamplerOpts { n_steps, seed });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOpts {
    /// Samples per row for CRPS and calibration [default: 100]
    #[arg(long)]
    pub crps_samples: Option<usize>,
    /// Samples per row averaged into the point prediction [default: 50]
    #[arg(long)]
    pub mean_samples: Option<usize>,
}
layered!(EvalOpts { crps_samples, mean_samples });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewsvendorOpts {
    /// Selling price per unit
    #[arg(long)]
    pub price: Option<f64>,
    /// Purchase cost per unit
    #[arg(long)]
    pub cost: Option<f64>,
    /// Demand samples per row [default: 100]
    #[arg(long)]
    pub n_samples: Option<usize>,
}
layered!(NewsvendorOpts { price, cost, n_samples });

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainOpts,
    pub gbt: GbtOpts,
    pub sde: SdeOpts,
    pub sampler: SamplerOpts,
    pub eval: EvalOpts,
    pub newsvendor: NewsvendorOpts,
}

impl FileConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }
}

pub fn treeffuser_config(t: TrainOpts, g: GbtOpts, s: SdeOpts) -> Result<TreeffuserConfig, CliError> {
    let mut cfg = TreeffuserConfig::default();
    let gbt = &mut cfg.gbt;
    set(&mut gbt.n_estimators, g.n_estimators);
    set(&mut gbt.learning_rate, g.learning_rate);
    set(&mut gbt.num_leaves, g.num_leaves);
    set(&mut gbt.early_stopping_rounds, g.early_stopping_rounds);
    set(&mut gbt.max_bins, g.max_bins);
    set(&mut gbt.min_samples_leaf, g.min_samples_leaf);
    set(&mut cfg.sde.alpha_min, s.alpha_min);
    set(&mut cfg.sde.alpha_max, s.alpha_max);
    set(&mut cfg.sde.horizon, s.horizon);
    set(&mut cfg.n_repeats, t.n_repeats);
    set(&mut cfg.validation_fraction, t.validation_fraction);
    set(&mut cfg.seed, t.seed);
    set(&mut cfg.score_param, t.score_param.map(ScoreParam::from));
    cfg.validate()?;
    Ok(cfg)
}

pub fn sampler_config(o: SamplerOpts) -> Result<SamplerConfig, CliError> {
    let mut sc = SamplerConfig::default();
    set(&mut sc.n_steps, o.n_steps);
    set(&mut sc.seed, o.seed);
    sc.validate()?;
    Ok(sc)
}

pub fn positive(name: &str, v: usize) -> Result<usize, CliError> {
    if v == 0 {
        return Err(CliError::Validation(format!("{name} must be at least 1")));
    }
    Ok(v)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
