//! Synthetic regression problems with known conditional distributions.
//!
//! * `branching_mixture`: a Gaussian mixture whose number of components
//!   grows from 2 to 4 with `x`.
//! * `inflated_gamma`: `y = x` with probability 0.15, otherwise
//!   `x + Gamma(2, 1)`.
//! * `arc_multioutput`: 2-d responses scattered around a circular arc whose
//!   radius and angular extent move with `x`.
//! * `linear_gaussian`: `y ~ N(10 βᵀx, 1)` with `β, x ~ N(0, I)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{default_names, Dataset};
use crate::metrics::SampleSet;
use crate::{rng, Error, Matrix, Result};

pub const MIXTURE_SCALE: f64 = 0.05;
pub const INFLATION_PROB: f64 = 0.15;
pub const GAMMA_SHAPE: f64 = 2.0;
pub const GAMMA_SCALE: f64 = 1.0;
pub const ARC_NOISE: f64 = 0.05;
pub const LINEAR_COEF_SCALE: f64 = 10.0;
pub const LINEAR_NOISE_SD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    BranchingMixture,
    InflatedGamma,
    ArcMultioutput,
    LinearGaussian,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] = [
        SynthKind::BranchingMixture,
        SynthKind::InflatedGamma,
        SynthKind::ArcMultioutput,
        SynthKind::LinearGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::BranchingMixture => "branching_mixture",
            SynthKind::InflatedGamma => "inflated_gamma",
            SynthKind::ArcMultioutput => "arc_multioutput",
            SynthKind::LinearGaussian => "linear_gaussian",
        }
    }

    pub fn d_y(self) -> usize {
        match self {
            SynthKind::ArcMultioutput => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown synthetic kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    /// Feature dimension; only `linear_gaussian` uses values other than 1.
    pub d_x: usize,
    pub seed: u64,
}

/// The exact conditional `p(y | x)` of a generator.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthOracle {
    BranchingMixture,
    InflatedGamma,
    ArcMultioutput,
    LinearGaussian { beta: Vec<f64> },
}

/// Component means of the branching mixture at `x`.
pub fn branching_means(x: f64) -> Vec<f64> {
    if x <= 1.0 / 3.0 {
        vec![x, -x]
    } else if x <= 2.0 / 3.0 {
        vec![x, 2.0 / 3.0 - x, -x]
    } else {
        vec![x, 4.0 / 3.0 - x, 2.0 / 3.0 - x, -x]
    }
}

/// Radius and angular extent `(radius, θ₀, θ₁)` of the arc at `x`; angles
/// are in turns (multiply by 2π for radians).
pub fn arc_geometry(x: f64) -> (f64, f64, f64) {
    if x <= 0.5 {
        let l = (0.5 - x) / (0.5 - 0.17);
        let r = 1.0 - l;
        (l + r * 0.1, l * -0.05 + r * -0.375, l * 0.3 + r * 0.625)
    } else {
        let l = (0.83 - x) / (0.83 - 0.5);
        let r = 1.0 - l;
        (l * 0.1 + r, l * 0.125 + r * 0.45, l * 1.125 + r * 0.8)
    }
}

/// Euclidean distance from `p` to the arc at `x`.
pub fn arc_distance(x: f64, p: [f64; 2]) -> f64 {
    let (radius, t0, t1) = arc_geometry(x);
    let (a0, a1) = (2.0 * PI * t0, 2.0 * PI * t1);
    let mut angle = p[1].atan2(p[0]);
    // unwrap into [a0, a0 + 2π)
    while angle < a0 {
        angle += 2.0 * PI;
    }
    while angle >= a0 + 2.0 * PI {
        angle -= 2.0 * PI;
    }
    if angle <= a1 {
        return ((p[0] * p[0] + p[1] * p[1]).sqrt() - radius).abs();
    }
    [a0, a1]
        .iter()
        .map(|a| ((p[0] - radius * a.cos()).powi(2) + (p[1] - radius * a.sin()).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

impl TruthOracle {
    pub fn kind(&self) -> SynthKind {
        match self {
            TruthOracle::BranchingMixture => SynthKind::BranchingMixture,
            TruthOracle::InflatedGamma => SynthKind::InflatedGamma,
            TruthOracle::ArcMultioutput => SynthKind::ArcMultioutput,
            TruthOracle::LinearGaussian { .. } => SynthKind::LinearGaussian,
        }
    }

    pub fn d_x(&self) -> usize {
        match self {
            TruthOracle::LinearGaussian { beta } => beta.len(),
            _ => 1,
        }
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d_x() {
            return Err(Error::DimensionMismatch {
                expected: self.d_x(),
                got: x.len(),
            });
        }
        match self {
            TruthOracle::LinearGaussian { .. } => {
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("x must be finite"));
                }
            }
            _ => {
                if !(0.0..=1.0).contains(&x[0]) {
                    return Err(Error::invalid(format!("x = {} is outside [0, 1]", x[0])));
                }
            }
        }
        Ok(())
    }

    fn draw_into(&self, x: &[f64], rng: &mut rng::Rng, out: &mut Vec<f64>) {
        match self {
            TruthOracle::BranchingMixture => {
                let means = branching_means(x[0]);
                let mu = means[rng.random_range(0..means.len())];
                out.push(mu + MIXTURE_SCALE * rng.sample::<f64, _>(StandardNormal));
            }
            TruthOracle::InflatedGamma => {
                let atom = rng.random::<f64>() < INFLATION_PROB;
                if atom {
                    out.push(x[0]);
                } else {
                    let g = Gamma::new(GAMMA_SHAPE, GAMMA_SCALE).expect("valid gamma parameters");
                    out.push(x[0] + g.sample(rng));
                }
            }
            TruthOracle::ArcMultioutput => {
                let (radius, t0, t1) = arc_geometry(x[0]);
                let angle = 2.0 * PI * rng.random_range(t0..t1);
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                out.push(radius * angle.cos() + ARC_NOISE * dx);
                out.push(radius * angle.sin() + ARC_NOISE * dy);
            }
            TruthOracle::LinearGaussian { beta } => {
                let mean: f64 = beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>() * LINEAR_COEF_SCALE;
                out.push(mean + LINEAR_NOISE_SD * rng.sample::<f64, _>(StandardNormal));
            }
        }
    }

    /// `m` independent draws from `p(y | x)`.
    pub fn truth_sample(&self, x: &[f64], m: usize, rng: &mut rng::Rng) -> Result<SampleSet> {
        self.check_x(x)?;
        let d_y = self.kind().d_y();
        let mut data = Vec::with_capacity(m * d_y);
        for _ in 0..m {
            self.draw_into(x, rng, &mut data);
        }
        Ok(SampleSet::new(Matrix::new(m, d_y, data)?)?.with_x(x))
    }

    pub fn mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        Ok(match self {
            TruthOracle::BranchingMixture => {
                let m = branching_means(x[0]);
                vec![m.iter().sum::<f64>() / m.len() as f64]
            }
            TruthOracle::InflatedGamma => vec![x[0] + (1.0 - INFLATION_PROB) * GAMMA_SHAPE * GAMMA_SCALE],
            TruthOracle::ArcMultioutput => {
                let (radius, t0, t1) = arc_geometry(x[0]);
                let (a0, a1) = (2.0 * PI * t0, 2.0 * PI * t1);
                let w = a1 - a0;
                vec![
                    radius * (a1.sin() - a0.sin()) / w,
                    radius * (a0.cos() - a1.cos()) / w,
                ]
            }
            TruthOracle::LinearGaussian { beta } => {
                vec![beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>() * LINEAR_COEF_SCALE]
            }
        })
    }
}

/// Generates `spec.n` rows and the oracle of their conditional law.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, TruthOracle)> {
    if spec.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = rng::seeded(spec.seed);
    let oracle = match spec.kind {
        SynthKind::BranchingMixture => TruthOracle::BranchingMixture,
        SynthKind::InflatedGamma => TruthOracle::InflatedGamma,
        SynthKind::ArcMultioutput => TruthOracle::ArcMultioutput,
        SynthKind::LinearGaussian => {
            if spec.d_x == 0 {
                return Err(Error::invalid("d_x must be at least 1"));
            }
            let beta = (0..spec.d_x).map(|_| rng.sample(StandardNormal)).collect();
            TruthOracle::LinearGaussian { beta }
        }
    };
    let d_x = oracle.d_x();
    let d_y = spec.kind.d_y();
    let mut xs = Vec::with_capacity(spec.n * d_x);
    let mut ys = Vec::with_capacity(spec.n * d_y);
    let mut x = vec![0.0; d_x];
    for _ in 0..spec.n {
        match spec.kind {
            SynthKind::LinearGaussian => {
                for v in &mut x {
                    *v = rng.sample(StandardNormal);
                }
            }
            _ => x[0] = rng.random::<f64>(),
        }
        oracle.draw_into(&x, &mut rng, &mut ys);
        xs.extend_from_slice(&x);
    }
    let y_names = match spec.kind {
        SynthKind::ArcMultioutput => vec!["y1".to_string(), "y2".to_string()],
        _ => vec!["y".to_string()],
    };
    let d = Dataset::new(
        Matrix::new(spec.n, d_x, xs)?,
        Matrix::new(spec.n, d_y, ys)?,
        default_names("x", d_x),
        y_names,
    )?;
    Ok((d, oracle))
}

pub fn gen_branching_mixture(n: usize, seed: u64) -> Result<(Dataset, TruthOracle)> {
    generate(&SynthSpec {
        kind: SynthKind::BranchingMixture,
        n,
        d_x: 1,
        seed,
    })
}

pub fn gen_inflated_gamma(n: usize, seed: u64) -> Result<(Dataset, TruthOracle)> {
    generate(&SynthSpec {
        kind: SynthKind::InflatedGamma,
        n,
        d_x: 1,
        seed,
    })
}

pub fn gen_arc_multioutput(n: usize, seed: u64) -> Result<(Dataset, TruthOracle)> {
    generate(&SynthSpec {
        kind: SynthKind::ArcMultioutput,
        n,
        d_x: 1,
        seed,
    })
}

pub fn gen_linear_gaussian(n: usize, d_x: usize, seed: u64) -> Result<(Dataset, TruthOracle)> {
    generate(&SynthSpec {
        kind: SynthKind::LinearGaussian,
        n,
        d_x,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn branching_regions() {
        assert_eq!(branching_means(0.2), vec![0.2, -0.2]);
        let m = branching_means(0.9);
        let expected = [0.9, 4.0 / 3.0 - 0.9, 2.0 / 3.0 - 0.9, -0.9];
        assert_eq!(m.len(), 4);
        for (a, b) in m.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((m[1] - 0.433_333_333_333).abs() < 1e-9);
        assert!((m[2] + 0.233_333_333_333).abs() < 1e-9);
        assert_eq!(branching_means(0.0), vec![0.0, 0.0]);
        assert_eq!(branching_means(1.0 / 3.0).len(), 2);
        assert_eq!(branching_means(2.0 / 3.0).len(), 3);
        assert_eq!(branching_means(0.5).len(), 3);
    }

    #[test]
    fn branching_responses_stay_in_range() {
        let (d, _) = gen_branching_mixture(20_000, 1).unwrap();
        let bound = 1.0 + 6.0 * MIXTURE_SCALE;
        assert!(d.responses().as_slice().iter().all(|y| y.abs() <= bound));
        assert!(d.features().as_slice().iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn inflated_gamma_atom_and_support() {
        let n = 100_000;
        let (d, _) = gen_inflated_gamma(n, 2).unwrap();
        let x = d.features().column(0);
        let y = d.responses().column(0);
        let atoms = x.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / n as f64;
        assert!((atoms - 0.15).abs() < 0.004, "{atoms}");
        assert!(x.iter().zip(&y).all(|(a, b)| b >= a));
        let excess: Vec<f64> = x.iter().zip(&y).filter(|(a, b)| a != b).map(|(a, b)| b - a).collect();
        let bound = 3.0 * 2f64.sqrt() / (0.85 * n as f64).sqrt();
        assert!((mean(&excess) - 2.0).abs() < bound);
    }

    #[test]
    fn arc_geometry_values() {
        let (radius, _, _) = arc_geometry(0.5);
        assert!((radius - 0.1).abs() < 1e-15);
        let (d, _) = gen_arc_multioutput(100, 3).unwrap();
        assert_eq!(d.d_y(), 2);
        assert_eq!(d.response_names(), &["y1", "y2"]);
    }

    #[test]
    fn arc_offsets_are_half_normal() {
        // at x = 0.83 the arc has radius 1 and spans 0.35 turns, so edge
        // effects are small and the distance is ≈ |N(0, σ²)|
        let o = TruthOracle::ArcMultioutput;
        let mut r = rng::seeded(4);
        let s = o.truth_sample(&[0.83], 100_000, &mut r).unwrap();
        let dists: Vec<f64> = s.draws.iter_rows().map(|p| arc_distance(0.83, [p[0], p[1]])).collect();
        let expected = ARC_NOISE * (2.0 / PI).sqrt();
        assert!((mean(&dists) / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn linear_gaussian_noise_and_coefficients() {
        let n = 10_000;
        let (d, o) = gen_linear_gaussian(n, 3, 5).unwrap();
        let TruthOracle::LinearGaussian { beta } = &o else { panic!() };
        let resid: Vec<f64> = d
            .features()
            .iter_rows()
            .zip(d.responses().iter_rows())
            .map(|(x, y)| y[0] - 10.0 * beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
            .collect();
        let m = mean(&resid);
        let var = resid.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.05);

        // least squares without intercept: solve (XᵀX) b = Xᵀy
        let p = 3;
        let mut xtx = vec![vec![0.0; p]; p];
        let mut xty = vec![0.0; p];
        for (x, y) in d.features().iter_rows().zip(d.responses().iter_rows()) {
            for i in 0..p {
                xty[i] += x[i] * y[0];
                for j in 0..p {
                    xtx[i][j] += x[i] * x[j];
                }
            }
        }
        let b = solve(xtx.clone(), xty);
        // standard error of each coefficient is about σ / √n
        for i in 0..p {
            assert!((b[i] - 10.0 * beta[i]).abs() < 3.0 * (xtx_inv_diag(&xtx, i)).sqrt());
        }
        assert_eq!(o.truth_sample(&[0.0; 3], 10, &mut rng::seeded(1)).unwrap().n_samples(), 10);
    }

    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    fn xtx_inv_diag(xtx: &[Vec<f64>], i: usize) -> f64 {
        let mut e = vec![0.0; xtx.len()];
        e[i] = 1.0;
        solve(xtx.to_vec(), e)[i]
    }

    #[test]
    fn oracles_match_model_definitions() {
        let mut r = rng::seeded(6);
        let s = TruthOracle::BranchingMixture.truth_sample(&[0.2], 20_000, &mut r).unwrap();
        assert!(mean(&s.column(0)).abs() < 0.01);

        let s = TruthOracle::InflatedGamma.truth_sample(&[0.4], 20_000, &mut r).unwrap();
        let frac = s.column(0).iter().filter(|&&v| v == 0.4).count() as f64 / 20_000.0;
        assert!((frac - 0.15).abs() < 3.0 * (0.15 * 0.85 / 20_000f64).sqrt());

        let o = TruthOracle::LinearGaussian { beta: vec![0.5, -1.0] };
        let s = o.truth_sample(&[1.0, 1.0], 20_000, &mut r).unwrap();
        assert!((mean(&s.column(0)) + 5.0).abs() < 0.05);
        let s = o.truth_sample(&[0.0, 0.0], 20_000, &mut r).unwrap();
        assert!(mean(&s.column(0)).abs() < 0.05);
    }

    #[test]
    fn oracle_rejects_out_of_domain_inputs() {
        let mut r = rng::seeded(0);
        assert!(TruthOracle::BranchingMixture.truth_sample(&[1.5], 1, &mut r).is_err());
        assert!(TruthOracle::InflatedGamma.truth_sample(&[-0.1], 1, &mut r).is_err());
        assert!(TruthOracle::ArcMultioutput.truth_sample(&[0.5, 0.5], 1, &mut r).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        for kind in SynthKind::ALL {
            let spec = SynthSpec { kind, n: 50, d_x: 2, seed: 9 };
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
            let other = SynthSpec { seed: 10, ..spec.clone() };
            assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
        }
        assert_eq!("inflated_gamma".parse::<SynthKind>().unwrap(), SynthKind::InflatedGamma);
        assert!("nope".parse::<SynthKind>().is_err());
    }
}
