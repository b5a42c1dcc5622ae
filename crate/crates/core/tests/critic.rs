mod common;

use common::random_unit;
use pcpg_core::critic::{project_to_ball, squared_loss_gradient};
use pcpg_core::*;
use proptest::prelude::*;
use rand::Rng;

fn noisy_dataset(dim: usize, n: usize, w: f64, seed: u64) -> RegressionDataset {
    let mut rng = stream_rng(seed, 0);
    let truth = random_unit(dim, 2.0 * w, &mut rng);
    let mut data = RegressionDataset::new(dim, 3.0, w).unwrap();
    for _ in 0..n {
        let phi = random_unit(dim, rng.random::<f64>(), &mut rng);
        let mean: f64 = phi.iter().zip(&truth).map(|(a, b)| a * b).sum();
        let y = (mean + 0.3 * (rng.random::<f64>() - 0.5)).clamp(-3.0, 3.0);
        data.push(&phi, y).unwrap();
    }
    data
}

#[test]
fn exact_fit_beats_random_feasible_points() {
    let data = noisy_dataset(6, 400, 1.0, 1);
    let fit = fit_exact_constrained(&data).unwrap();
    assert!(fit.theta.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1.0 + 1e-12);
    let mut rng = stream_rng(1, 1);
    for _ in 0..20_000 {
        let r = rng.random::<f64>().powf(1.0 / 6.0);
        let theta = random_unit(6, r, &mut rng);
        assert!(fit.train_loss <= data.loss(&theta) + 1e-12);
    }
    let sgd = fit_projected_sgd(&data, 5, 1).unwrap();
    assert!(fit.train_loss <= sgd.train_loss + 1e-6);
}

#[test]
fn boundary_solution_satisfies_kkt() {
    // truth has norm 2W so the constraint binds
    let data = noisy_dataset(4, 300, 0.5, 2);
    let fit = fit_exact_constrained(&data).unwrap();
    let norm = fit.theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 0.5).abs() < 1e-8, "norm {norm}");
    // the loss gradient must point straight back along -theta
    let h = 1e-6;
    let grad: Vec<f64> = (0..4)
        .map(|k| {
            let mut up = fit.theta.clone();
            let mut down = fit.theta.clone();
            up[k] += h;
            down[k] -= h;
            (data.loss(&up) - data.loss(&down)) / (2.0 * h)
        })
        .collect();
    let gn = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos: f64 = grad.iter().zip(&fit.theta).map(|(g, t)| g * t).sum::<f64>() / (gn * norm);
    assert!(cos < -1.0 + 1e-5, "cos {cos}");
}

#[test]
fn sgd_excess_train_error_within_rate() {
    for seed in 0..5 {
        let n = 4000;
        let (w, h) = (1.0, 3.0);
        let data = noisy_dataset(5, n, w, 10 + seed);
        let exact = fit_exact_constrained(&data).unwrap();
        let sgd = fit_projected_sgd(&data, 1, seed).unwrap();
        let excess = sgd.train_loss - exact.train_loss;
        assert!(excess >= -1e-12);
        assert!(excess <= (w * w + w * h) * 2.0 / (n as f64).sqrt(), "excess {excess}");
    }
}

#[test]
fn weighted_rows_equal_duplicates() {
    let mut rng = stream_rng(3, 0);
    let mut dup = RegressionDataset::new(3, 1.0, 10.0).unwrap();
    let mut weighted = RegressionDataset::new(3, 1.0, 10.0).unwrap();
    for _ in 0..30 {
        let phi = random_unit(3, 1.0, &mut rng);
        let y = rng.random::<f64>();
        let k = rng.random_range(1..4);
        for _ in 0..k {
            dup.push(&phi, y).unwrap();
        }
        weighted.push_weighted(&phi, y, k as f64).unwrap();
    }
    let a = fit_exact_constrained(&dup).unwrap();
    let b = fit_exact_constrained(&weighted).unwrap();
    for (x, y) in a.theta.iter().zip(&b.theta) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn sparse_rows_equal_dense_rows() {
    let mut rng = stream_rng(4, 0);
    let mut dense = RegressionDataset::new(5, 1.0, 10.0).unwrap();
    let mut sparse = RegressionDataset::new(5, 1.0, 10.0).unwrap();
    for i in 0..40 {
        let mut phi = vec![0.0; 5];
        let (j, k) = (i % 5, (i * 3 + 1) % 5);
        phi[j] = rng.random::<f64>();
        phi[k] = rng.random::<f64>();
        let support: Vec<usize> = (0..5).filter(|&t| phi[t] != 0.0).collect();
        let y = rng.random::<f64>();
        dense.push(&phi, y).unwrap();
        sparse.push_sparse(&phi, &support, y, 1.0).unwrap();
    }
    let a = fit_exact_constrained(&dense).unwrap();
    let b = fit_exact_constrained(&sparse).unwrap();
    assert!((a.train_loss - b.train_loss).abs() < 1e-14);
}

#[test]
fn projection_scales_onto_ball() {
    let mut v = vec![3.0, 4.0, 0.0];
    project_to_ball(&mut v, 3.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm <= 3.0 && norm > 3.0 - 1e-12);
    assert!((v[0] / v[1] - 0.75).abs() < 1e-12);
    let mut inside = vec![0.1, -0.2];
    project_to_ball(&mut inside, 3.0);
    assert_eq!(inside, vec![0.1, -0.2]);
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut rng = stream_rng(5, 0);
    let theta = random_unit(4, 0.7, &mut rng);
    let phi = random_unit(4, 1.0, &mut rng);
    let g = squared_loss_gradient(&theta, &phi, 0.3);
    for k in 0..4 {
        let mut up = theta.clone();
        let mut down = theta.clone();
        up[k] += 1e-6;
        down[k] -= 1e-6;
        let fd = (pcpg_core::critic::squared_loss(&up, &phi, 0.3) - pcpg_core::critic::squared_loss(&down, &phi, 0.3))
            / 2e-6;
        assert!((fd - g[k]).abs() < 1e-7);
    }
}

proptest! {
    #[test]
    fn projection_is_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..8), r in 0.01f64..50.0) {
        let mut once = v.clone();
        project_to_ball(&mut once, r);
        let mut twice = once.clone();
        project_to_ball(&mut twice, r);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.iter().map(|x| x * x).sum::<f64>().sqrt() <= r);
    }
}
