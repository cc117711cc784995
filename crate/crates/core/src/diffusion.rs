//! Variance-exploding SDE with a geometric noise schedule.
//!
//! Forward process: `dy = g(t) dw` with zero drift, where
//! `σ(t) = α_min (α_max / α_min)^(t/T)` and `g(t)² = d σ(t)² / dt`.
//! The transition kernel is `p_{0t}(y_t | y_0) = N(y_0, σ(t)² I)`.

use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub horizon: f64,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            alpha_min: 0.01,
            alpha_max: 20.0,
            horizon: 1.0,
        }
    }
}

/// A noised response `y_t = y_0 + σ(t) ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedPoint {
    pub y_t: Vec<f64>,
    pub t: f64,
    pub noise: Vec<f64>,
}

impl SdeConfig {
    pub fn new(alpha_min: f64, alpha_max: f64, horizon: f64) -> Result<Self> {
        let c = Self {
            alpha_min,
            alpha_max,
            horizon,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min > 0.0 && self.alpha_min.is_finite()) {
            return Err(Error::invalid(format!("alpha_min must be positive, got {}", self.alpha_min)));
        }
        if !(self.alpha_max > self.alpha_min && self.alpha_max.is_finite()) {
            return Err(Error::invalid(format!(
                "alpha_max ({}) must exceed alpha_min ({})",
                self.alpha_max, self.alpha_min
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    fn clamp(&self, t: f64) -> f64 {
        t.clamp(0.0, self.horizon)
    }

    pub fn sigma(&self, t: f64) -> f64 {
        let t = self.clamp(t);
        if t == self.horizon {
            return self.alpha_max;
        }
        self.alpha_min * (self.alpha_max / self.alpha_min).powf(t / self.horizon)
    }

    /// Diffusion coefficient, `σ(t) √(2 ln(α_max/α_min) / T)`.
    pub fn g(&self, t: f64) -> f64 {
        self.sigma(t) * self.g_over_sigma()
    }

    fn g_over_sigma(&self) -> f64 {
        (2.0 * (self.alpha_max / self.alpha_min).ln() / self.horizon).sqrt()
    }

    pub fn drift(&self, y: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0; y.len()]
    }

    pub fn perturb(&self, y0: &[f64], t: f64, zeta: &[f64]) -> PerturbedPoint {
        debug_assert_eq!(y0.len(), zeta.len());
        let s = self.sigma(t);
        PerturbedPoint {
            y_t: y0.iter().zip(zeta).map(|(y, z)| y + s * z).collect(),
            t: self.clamp(t),
            noise: zeta.to_vec(),
        }
    }

    /// `∇ log p_{0t}(y_t | y_0) = (y_0 − y_t) / σ(t)²`.
    pub fn conditional_score(&self, y0: &[f64], y_t: &[f64], t: f64) -> Vec<f64> {
        let s2 = self.sigma(t).powi(2);
        y0.iter().zip(y_t).map(|(a, b)| (a - b) / s2).collect()
    }

    /// A draw from the terminal distribution `N(0, σ(T)² I)`.
    pub fn sample_p_simple<R: rand::Rng + ?Sized>(&self, d_y: usize, rng: &mut R) -> Vec<f64> {
        (0..d_y)
            .map(|_| self.alpha_max * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Exact score of `p_t` when the clean distribution is `N(μ, s² I)`:
    /// `(μ − y) / (s² + σ(t)²)`.
    pub fn gaussian_target_score(&self, mu: &[f64], s2: f64, y: &[f64], t: f64) -> Vec<f64> {
        let v = s2 + self.sigma(t).powi(2);
        mu.iter().zip(y).map(|(m, y)| (m - y) / v).collect()
    }
}
