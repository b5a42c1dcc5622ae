#![allow(dead_code)]

use nalgebra::DMatrix;
use pcpg_core::{stream_rng, CovarianceMatrix, TabularPolicy};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Random stochastic policy with full support.
pub fn random_policy(num_states: usize, num_actions: usize, seed: u64) -> TabularPolicy {
    let mut rng = stream_rng(seed, 0xB0_11C7);
    let mut table = Vec::with_capacity(num_states * num_actions);
    for _ in 0..num_states {
        let row: Vec<f64> = (0..num_actions).map(|_| rng.random::<f64>() + 0.05).collect();
        let t: f64 = row.iter().sum();
        table.extend(row.iter().map(|x| x / t));
    }
    // re-normalize through the validated constructor
    let mut fixed = table.clone();
    for row in fixed.chunks_mut(num_actions) {
        let err = 1.0 - row.iter().sum::<f64>();
        row[0] += err;
    }
    TabularPolicy::from_table(num_actions, fixed).expect("rows sum to one")
}

/// Pearson chi-square p-value of observed counts against expected
/// probabilities, pooling cells whose expected count is below 5.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * n;
        if e < 5.0 {
            pooled.0 += c as f64;
            pooled.1 += e;
        } else {
            cells.push((c as f64, e));
        }
    }
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        cells.push(pooled);
    }
    let stat: f64 = cells
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dof = cells.len().saturating_sub(1).max(1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Random PSD matrix with largest eigenvalue `top`.
pub fn random_psd<R: Rng>(dim: usize, rank: usize, top: f64, rng: &mut R) -> CovarianceMatrix {
    let a = DMatrix::from_fn(dim, rank, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let mut m = &a * a.transpose();
    let ev = m.clone().symmetric_eigenvalues().max();
    if ev > 0.0 {
        m *= top / ev;
    }
    m = (&m + m.transpose()) * 0.5;
    CovarianceMatrix::from_matrix(m, 1).unwrap()
}

/// Random vector with `||v||_2 = norm`.
pub fn random_unit<R: Rng>(dim: usize, norm: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x * norm / n).collect();
        }
    }
}

/// `ln det` through a Cholesky factorization.
pub fn chol_log_det(m: &DMatrix<f64>) -> f64 {
    let c = m.clone().cholesky().expect("positive definite");
    2.0 * c.l().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}
