mod common;

use common::stack;
use deepstack_core::data::Dataset;
use deepstack_core::generative::{
    evaluate_generative, gsn_chain, nearest_training_sample, parzen_fit, parzen_grid_scores, parzen_loglik,
    parzen_select_sigma, GenerativeConfig,
};
use deepstack_core::matrix::squared_distance;
use deepstack_core::train::{train_joint, TrainPlan};
use deepstack_core::{CorruptionSpec, LossSpec, Matrix, Objective, RegularizerSpec, RngState};

fn naive_loglik(samples: &Matrix, sigma: f64, x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(d / 2.0);
    let p: f64 = samples
        .iter_rows()
        .map(|s| (-squared_distance(x, s) / (2.0 * sigma * sigma)).exp() / norm)
        .sum::<f64>()
        / samples.rows() as f64;
    p.ln()
}

#[test]
fn loglik_matches_direct_sum() {
    let mut rng = RngState::new(3);
    let samples = rng.uniform_matrix(10, 4, 0.0, 1.0);
    for sigma in [0.2, 0.5, 1.0] {
        let m = parzen_fit(samples.clone(), sigma).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let got = parzen_loglik(&m, &x).unwrap();
            assert!((got - naive_loglik(&samples, sigma, &x)).abs() < 1e-9);
        }
    }
}

#[test]
fn far_component_adds_mixture_term() {
    let near = Matrix::from_rows(&[[0.2, 0.4]]);
    let both = Matrix::from_rows(&[[0.2, 0.4], [50.0, 50.0]]);
    let x = [0.3, 0.3];
    let sigma = 0.5;
    let one = parzen_loglik(&parzen_fit(near, sigma).unwrap(), &x).unwrap();
    let two = parzen_loglik(&parzen_fit(both.clone(), sigma).unwrap(), &x).unwrap();
    // log((k₁ + k₂)/2) − log k₁ with k₂/k₁ = exp(−(q₂ − q₁)/2σ²).
    let q1 = squared_distance(&x, both.row(0));
    let q2 = squared_distance(&x, both.row(1));
    let expected = (0.5 * (1.0 + (-(q2 - q1) / (2.0 * sigma * sigma)).exp())).ln();
    assert!((two - one - expected).abs() < 1e-12);
}

#[test]
fn far_queries_stay_finite() {
    let m = parzen_fit(Matrix::from_rows(&[[0.0; 3]]), 0.1).unwrap();
    let ll = parzen_loglik(&m, &[100.0, 100.0, 100.0]).unwrap();
    assert!(ll.is_finite() && ll < -1e5);
}

#[test]
fn sigma_selection_tracks_dense_scan() {
    let mut rng = RngState::new(17);
    let draw = |rng: &mut RngState, n: usize| {
        Matrix::from_vec(n, 1, (0..n).map(|_| 0.2 * rng.normal()).collect()).unwrap()
    };
    let samples = draw(&mut rng, 2000);
    let valid = draw(&mut rng, 500);
    let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 0.01).collect();
    let chosen = parzen_select_sigma(&samples, &valid, &grid).unwrap();
    // Brute-force oracle: mean LL on a fine grid, scored with direct sums.
    let fine: Vec<f64> = (10..=200).map(|k| k as f64 * 0.001).collect();
    let score = |s: f64| valid.iter_rows().map(|x| naive_loglik(&samples, s, x)).sum::<f64>();
    let best = fine.iter().copied().fold((0.0, f64::NEG_INFINITY), |b, s| {
        let v = score(s);
        if v > b.1 { (s, v) } else { b }
    });
    assert!((chosen - best.0).abs() <= 0.01 + 1e-12, "chosen {chosen}, oracle {}", best.0);
    assert_eq!(chosen, parzen_select_sigma(&samples, &valid, &grid).unwrap());
    assert_eq!(parzen_select_sigma(&samples, &valid, &[0.3]).unwrap(), 0.3);
    // Beyond the choice, validation LL falls.
    let scores = parzen_grid_scores(&samples, &valid, &grid).unwrap();
    let i = grid.iter().position(|&s| s == chosen).unwrap();
    assert!(scores[i + 1..].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn chain_counts_and_range() {
    let s = stack(16, &[8, 4], true, 1);
    let mut rng = RngState::new(2);
    let out = gsn_chain(&s, &[0.5; 16], 40, &CorruptionSpec::masking(0.3), &mut rng, 4).unwrap();
    assert_eq!(out.shape(), (10, 16));
    assert!(out.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    let again = gsn_chain(&s, &[0.5; 16], 40, &CorruptionSpec::masking(0.3), &mut RngState::new(2), 4).unwrap();
    assert_eq!(out, again);
    assert!(gsn_chain(&s, &[0.5; 15], 4, &CorruptionSpec::none(), &mut rng, 1).is_err());
    assert!(gsn_chain(&s, &[0.5; 16], 0, &CorruptionSpec::none(), &mut rng, 1).is_err());
}

#[test]
fn nearest_sample_matches_scan() {
    let mut rng = RngState::new(5);
    let train = rng.uniform_matrix(50, 6, 0.0, 1.0);
    assert_eq!(nearest_training_sample(train.row(13), &train).unwrap(), 13);
    for _ in 0..100 {
        let q: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
        let oracle = (0..50)
            .min_by(|&a, &b| squared_distance(&q, train.row(a)).total_cmp(&squared_distance(&q, train.row(b))))
            .unwrap();
        assert_eq!(nearest_training_sample(&q, &train).unwrap(), oracle);
    }
    let perm = rng.permutation(50);
    let shuffled = train.select_rows(&perm);
    let q = [0.4; 6];
    let i = nearest_training_sample(&q, &train).unwrap();
    let j = nearest_training_sample(&q, &shuffled).unwrap();
    assert_eq!(perm[j], i);
}

/// Two complementary 16-pixel patterns with 5% flipped pixels.
fn clusters(seed: u64) -> Dataset {
    let (n, d) = (400, 16);
    let mut rng = RngState::new(seed);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        for j in 0..d {
            let p = if (j < d / 2) == (c == 0) { 1.0 } else { 0.0 };
            x.push(if rng.bernoulli(0.05) { 1.0 - p } else { p });
        }
        y.push(c);
    }
    Dataset::from_rows("clusters", Matrix::from_vec(n, d, x).unwrap(), Some(y), 2, 240, 80).unwrap()
}

#[test]
fn trained_model_beats_untrained() {
    let data = clusters(1);
    let init = stack(16, &[8, 4], true, 3);
    // Heavy masking lets the chain cross between the two modes.
    let corruption = CorruptionSpec::masking(0.7);
    let obj = Objective::uniform(LossSpec::CrossEntropy, 2, corruption, RegularizerSpec::none());
    let mut plan = TrainPlan::new(obj, 200, 0.01, 4);
    plan.minibatch = 20;
    let (trained, _) = train_joint(init.clone(), &data, &plan).unwrap();
    let config = GenerativeConfig::new(500, corruption);
    let good = evaluate_generative(&trained, &data, &config, &mut RngState::new(9)).unwrap();
    let bad = evaluate_generative(&init, &data, &config, &mut RngState::new(9)).unwrap();
    assert!(good.mean_ll - bad.mean_ll > 10.0, "trained {} vs untrained {}", good.mean_ll, bad.mean_ll);
    let again = evaluate_generative(&trained, &data, &config, &mut RngState::new(9)).unwrap();
    assert_eq!((good.mean_ll, good.stderr), (again.mean_ll, again.stderr));
}
