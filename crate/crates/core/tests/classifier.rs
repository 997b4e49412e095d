mod common;

use common::{bars, stack};
use deepstack_core::classifier::{
    evaluate, extract_features, finetune, train_linear_probe, train_probe_with_c, Classifier, FinetuneNet,
    FinetunePlan, LinearProbe, ProbeConfig,
};
use deepstack_core::data::synth_bars;
use deepstack_core::model::encode;
use deepstack_core::{Matrix, RngState};

/// Dual coordinate descent for `½‖w‖² + C Σ hinge` with a constant feature.
fn dcd_svm(x: &Matrix, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let (n, d) = x.shape();
    let aug = |i: usize| x.row(i).iter().copied().chain([1.0]).collect::<Vec<f64>>();
    let rows: Vec<Vec<f64>> = (0..n).map(aug).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    for _ in 0..20_000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let q: f64 = rows[i].iter().map(|v| v * v).sum();
            let g = y[i] * rows[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - 1.0;
            let new = (alpha[i] - g / q).clamp(0.0, c);
            let delta = new - alpha[i];
            if delta != 0.0 {
                for (wj, xj) in w.iter_mut().zip(&rows[i]) {
                    *wj += delta * y[i] * xj;
                }
                alpha[i] = new;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-10 {
            break;
        }
    }
    let b = w[d];
    w.truncate(d);
    (w, b)
}

fn oracle_probe(x: &Matrix, labels: &[usize], classes: usize, c: f64) -> LinearProbe {
    let mut w = Matrix::zeros(classes, x.cols());
    let mut b = vec![0.0; classes];
    for k in 0..classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let (wk, bk) = dcd_svm(x, &y, c);
        w.row_mut(k).copy_from_slice(&wk);
        b[k] = bk;
    }
    LinearProbe { w, b, c, feature_tag: String::new() }
}

/// Three overlapping Gaussian blobs in the plane.
fn blobs(n: usize, rng: &mut RngState) -> (Matrix, Vec<usize>) {
    let centres = [[0.3, 0.3], [0.7, 0.35], [0.5, 0.7]];
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % 3;
        x.push(centres[k][0] + 0.13 * rng.normal());
        x.push(centres[k][1] + 0.13 * rng.normal());
        y.push(k);
    }
    (Matrix::from_vec(n, 2, x).unwrap(), y)
}

#[test]
fn probe_agrees_with_exact_solver() {
    for seed in 0..3 {
        let mut rng = RngState::new(seed);
        let (x, y) = blobs(200, &mut rng);
        let (tx, ty) = blobs(3000, &mut rng);
        for c in [0.1, 1.0, 10.0] {
            let ours = train_probe_with_c(&x, &y, 3, c, 100).unwrap();
            let exact = oracle_probe(&x, &y, 3, c);
            let a = evaluate(&ours, &tx, &ty).unwrap().error;
            let b = evaluate(&exact, &tx, &ty).unwrap().error;
            assert!((a - b).abs() <= 0.5, "seed {seed} C={c}: {a:.2}% vs exact {b:.2}%");
        }
    }
}

#[test]
fn raw_pixel_probe_on_bars() {
    let data = bars(21);
    let probe = train_linear_probe(
        &data.train.x,
        data.train.labels().unwrap(),
        2,
        &ProbeConfig::default(),
        (&data.valid.x, data.valid.labels().unwrap()),
    )
    .unwrap();
    let report = evaluate(&probe, &data.test.x, data.test.labels().unwrap()).unwrap();
    assert!(report.error < 5.0, "{report:?}");
}

#[test]
fn separable_case_is_fit_exactly_and_ignores_duplicates() {
    let mut rng = RngState::new(8);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..60 {
        let k = i % 2;
        let base = if k == 0 { 0.2 } else { 0.8 };
        rows.push([base + 0.1 * (rng.uniform() - 0.5), rng.uniform()]);
        y.push(k);
    }
    let x = Matrix::from_rows(&rows);
    let probe = train_probe_with_c(&x, &y, 2, 10.0, 200).unwrap();
    assert_eq!(evaluate(&probe, &x, &y).unwrap().mistakes, 0);

    let mut dup_rows = rows.clone();
    dup_rows.push(rows[5]);
    let mut dup_y = y.clone();
    dup_y.push(y[5]);
    let dup = train_probe_with_c(&Matrix::from_rows(&dup_rows), &dup_y, 2, 10.0, 200).unwrap();
    let grid: Vec<[f64; 2]> = (0..21).flat_map(|i| (0..5).map(move |j| [i as f64 / 20.0, j as f64 / 4.0])).collect();
    let grid: Vec<[f64; 2]> = grid.into_iter().filter(|p| (p[0] - 0.5).abs() > 0.1).collect();
    let g = Matrix::from_rows(&grid);
    assert_eq!(probe.predict(&g).unwrap(), dup.predict(&g).unwrap());
}

#[test]
fn features_are_clean_top_codes() {
    let s = stack(64, &[20, 10], true, 4);
    let data = bars(22);
    let f = extract_features(&s, &data.train.x).unwrap();
    let steps = encode(&s, &data.train.x, None, &mut RngState::new(0)).unwrap();
    assert_eq!(&f, &steps.last().unwrap().hidden);
    assert_eq!(f.cols(), 10);
    assert_eq!(f, extract_features(&s, &data.train.x).unwrap());
}

#[test]
fn probing_leaves_stack_untouched() {
    let s = stack(64, &[16], true, 5);
    let before = s.clone();
    let data = bars(23);
    let f = extract_features(&s, &data.train.x).unwrap();
    train_probe_with_c(&f, data.train.labels().unwrap(), 2, 1.0, 5).unwrap();
    assert_eq!(s, before);
}

#[test]
fn evaluation_ignores_order() {
    let data = bars(24);
    let probe = train_probe_with_c(&data.train.x, data.train.labels().unwrap(), 2, 1.0, 20).unwrap();
    let a = evaluate(&probe, &data.test.x, data.test.labels().unwrap()).unwrap();
    let perm = RngState::new(1).permutation(data.test.len());
    let shuffled = data.test.select(&perm);
    let b = evaluate(&probe, &shuffled.x, shuffled.labels().unwrap()).unwrap();
    assert_eq!(a, b);
    assert!(evaluate(&probe, &Matrix::zeros(0, 64), &[]).is_err());
}

#[test]
fn zero_epoch_finetune_is_identity() {
    let data = bars(25);
    let net = FinetuneNet::new(stack(64, &[12], true, 6), 2, &mut RngState::new(1)).unwrap();
    let out = finetune(net.clone(), &data, &FinetunePlan::new(0, 0.01, 3)).unwrap();
    assert_eq!(out.net, net);
    assert!(out.history.is_empty());
}

#[test]
fn finetune_returns_best_validation_epoch() {
    let data = synth_bars(400, 8, &mut RngState::new(26)).unwrap().with_split(200, 100).unwrap();
    let net = FinetuneNet::new(stack(64, &[12], true, 6), 2, &mut RngState::new(1)).unwrap();
    let mut plan = FinetunePlan::new(40, 0.05, 3);
    plan.minibatch = 20;
    plan.early_stopping = Some(deepstack_core::train::EarlyStopping { patience: 5 });
    let out = finetune(net, &data, &plan).unwrap();
    let best = out.history.iter().map(|e| e.valid_error.unwrap()).fold(f64::INFINITY, f64::min);
    let now = evaluate(&out.net, &data.valid.x, data.valid.labels().unwrap()).unwrap().error;
    assert_eq!(now, best);
    assert!(out.report.error < 10.0, "{:?}", out.report);
}
