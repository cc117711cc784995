//! Probabilistic regression for tabular data with diffusion models whose score
//! is learned by gradient-boosted trees.
//!
//! The pipeline is:
//!
//! 1. [`data`] loads a table and standardizes the responses.
//! 2. [`model::build_training_table`] turns every row into `R` noised copies
//!    with their denoising targets.
//! 3. [`gbt`] fits one boosted ensemble per response dimension.
//! 4. [`model::TreeffuserModel::sample`] integrates the reverse-time SDE of
//!    [`diffusion`] with the learned score to draw from `p(y | x)`.
//! 5. [`metrics`] scores the draws (CRPS, calibration, newsvendor decisions).
//!
//! [`synth`] provides synthetic generators with known conditionals.

pub mod data;
pub mod diffusion;
mod error;
pub mod gbt;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
