use rand::Rng;
use treeffuser::data::Dataset;
use treeffuser::diffusion::SdeConfig;
use treeffuser::gbt::GbtParams;
use treeffuser::model::{load_model, model_to_json, save_model, train, SamplerConfig, TreeffuserConfig};
use treeffuser::{rng, synth, Matrix};

fn quick_cfg(seed: u64) -> TreeffuserConfig {
    TreeffuserConfig {
        n_repeats: 10,
        gbt: GbtParams {
            n_estimators: 100,
            ..GbtParams::default()
        },
        seed,
        ..TreeffuserConfig::default()
    }
}

#[test]
fn saved_model_scores_and_samples_identically() {
    let (d, _) = synth::gen_arc_multioutput(500, 3).unwrap();
    let m = train(&d, &quick_cfg(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();

    let mut r = rng::seeded(5);
    for _ in 0..200 {
        let y = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let t = r.random_range(0.001..1.0);
        let x = [r.random::<f64>()];
        let a = m.score(&y, t, &x).unwrap();
        let b = back.score(&y, t, &x).unwrap();
        for k in 0..2 {
            assert!((a[k] - b[k]).abs() <= 1e-12 * a[k].abs().max(1.0));
        }
    }
    let sc = SamplerConfig::default();
    assert_eq!(m.sample(&[0.4], 20, &sc).unwrap(), back.sample(&[0.4], 20, &sc).unwrap());
}

#[test]
fn seeds_fix_models_and_samples() {
    let (d, _) = synth::gen_branching_mixture(600, 8).unwrap();
    let a = train(&d, &quick_cfg(4)).unwrap();
    let b = train(&d, &quick_cfg(4)).unwrap();
    assert_eq!(model_to_json(&a).unwrap(), model_to_json(&b).unwrap());
    let c = train(&d, &quick_cfg(5)).unwrap();
    assert_ne!(model_to_json(&a).unwrap(), model_to_json(&c).unwrap());

    let xs = Matrix::new(3, 1, vec![0.1, 0.5, 0.9]).unwrap();
    let sc = SamplerConfig {
        seed: 9,
        ..SamplerConfig::default()
    };
    let s1 = a.sample_rows(&xs, 30, &sc).unwrap();
    let s2 = a.sample_rows(&xs, 30, &sc).unwrap();
    assert_eq!(s1, s2);
    assert_ne!(s1[0].draws, s1[1].draws);
}

#[test]
fn learned_score_approximates_the_gaussian_oracle() {
    // responses are N(0, 1) whatever x is, so standardization is close to identity
    let n = 4000;
    let mut r = rng::seeded(21);
    let xs: Vec<f64> = (0..n).map(|_| r.random()).collect();
    let ys: Vec<f64> = (0..n).map(|_| r.sample(rand_distr::StandardNormal)).collect();
    let d = Dataset::from_matrices(Matrix::new(n, 1, xs).unwrap(), Matrix::new(n, 1, ys).unwrap()).unwrap();
    let m = train(&d, &TreeffuserConfig::default()).unwrap();
    let oracle = SdeConfig::default().gaussian_target_score(&[0.0], 1.0, &[0.5], 0.5)[0];
    for x in [0.1, 0.5, 0.9] {
        let s = m.score(&[0.5], 0.5, &[x]).unwrap()[0];
        assert!((s - oracle).abs() < 0.15, "x={x}: {s} vs {oracle}");
    }
}
