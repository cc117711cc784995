#![allow(dead_code)]

/// Wasserstein-1 distance between two equally sized 1-D samples.
pub fn w1(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Double-sum CRPS, quadratic in the sample count.
pub fn crps_pairwise(samples: &[f64], y: f64) -> f64 {
    let m = samples.len() as f64;
    let abs: f64 = samples.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
    let mut pairs = 0.0;
    for a in samples {
        for b in samples {
            pairs += (a - b).abs();
        }
    }
    abs - pairs / (2.0 * m * m)
}
