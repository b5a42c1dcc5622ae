//! Constrained linear regression of Q-targets onto features.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;

use crate::error::{input, Error, Result};
use crate::mdp::stream_rng;

/// Rows `(phi, y, weight)` with sparse storage of `phi`.
#[derive(Clone, Debug)]
pub struct RegressionDataset {
    dim: usize,
    target_bound: f64,
    norm_bound: f64,
    values: Vec<f64>,
    indices: Vec<usize>,
    offsets: Vec<usize>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

impl RegressionDataset {
    /// `target_bound` is `H_y` (every `|y| <= H_y`), `norm_bound` is the
    /// radius `W` of the feasible ball.
    pub fn new(dim: usize, target_bound: f64, norm_bound: f64) -> Result<Self> {
        if dim == 0 {
            return Err(input("regression dimension must be positive"));
        }
        if !(target_bound > 0.0 && target_bound.is_finite()) {
            return Err(input(format!("target bound must be positive, got {target_bound}")));
        }
        if !(norm_bound > 0.0 && norm_bound.is_finite()) {
            return Err(input(format!("norm bound W must be positive, got {norm_bound}")));
        }
        Ok(RegressionDataset {
            dim,
            target_bound,
            norm_bound,
            values: Vec::new(),
            indices: Vec::new(),
            offsets: vec![0],
            targets: Vec::new(),
            weights: Vec::new(),
        })
    }

    pub fn push(&mut self, phi: &[f64], y: f64) -> Result<()> {
        self.push_weighted(phi, y, 1.0)
    }

    pub fn push_weighted(&mut self, phi: &[f64], y: f64, weight: f64) -> Result<()> {
        let support: Vec<usize> = (0..phi.len()).filter(|&i| phi[i] != 0.0).collect();
        if phi.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: phi.len() });
        }
        self.push_sparse(phi, &support, y, weight)
    }

    /// `phi` restricted to `support`.
    pub fn push_sparse(&mut self, phi: &[f64], support: &[usize], y: f64, weight: f64) -> Result<()> {
        if !y.is_finite() || y.abs() > self.target_bound {
            return Err(input(format!("target {y} exceeds bound {}", self.target_bound)));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(input(format!("row weight {weight} must be non-negative")));
        }
        for &i in support {
            if i >= self.dim {
                return Err(Error::Dimension { expected: self.dim, got: i + 1 });
            }
            self.indices.push(i);
            self.values.push(phi[i]);
        }
        self.offsets.push(self.indices.len());
        self.targets.push(y);
        self.weights.push(weight);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn target_bound(&self) -> f64 {
        self.target_bound
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    fn predict_row(&self, theta: &[f64], i: usize) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, v)| theta[j] * v).sum()
    }

    /// Weighted mean squared error of `theta`.
    pub fn loss(&self, theta: &[f64]) -> f64 {
        let total_w: f64 = self.weights.iter().sum();
        if total_w == 0.0 {
            return 0.0;
        }
        (0..self.len())
            .map(|i| self.weights[i] * (self.predict_row(theta, i) - self.targets[i]).powi(2))
            .sum::<f64>()
            / total_w
    }

    /// Weighted Gram matrix and moment vector (both normalized by total weight).
    fn normal_equations(&self) -> (Gram, Vec<f64>) {
        let total_w: f64 = self.weights.iter().sum();
        let norm = if total_w > 0.0 { 1.0 / total_w } else { 0.0 };
        let mut moment = vec![0.0; self.dim];
        let mut diag = vec![0.0; self.dim];
        let mut dense: Option<DMatrix<f64>> = None;
        for i in 0..self.len() {
            let (idx, val) = self.row(i);
            let w = self.weights[i] * norm;
            for (&j, &v) in idx.iter().zip(val) {
                moment[j] += w * v * self.targets[i];
            }
            if idx.len() <= 1 && dense.is_none() {
                if let (Some(&j), Some(&v)) = (idx.first(), val.first()) {
                    diag[j] += w * v * v;
                }
                continue;
            }
            let m = dense.get_or_insert_with(|| DMatrix::from_diagonal(&DVector::from_column_slice(&diag)));
            for (&j, &vj) in idx.iter().zip(val) {
                for (&k, &vk) in idx.iter().zip(val) {
                    m[(j, k)] += w * vj * vk;
                }
            }
        }
        match dense {
            Some(m) => (Gram::Dense(m), moment),
            None => (Gram::Diagonal(diag), moment),
        }
    }
}

enum Gram {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticFit {
    pub theta: Vec<f64>,
    pub train_loss: f64,
}

/// Scale onto the `||theta|| <= radius` ball. Idempotent bit-for-bit.
pub fn project_to_ball(theta: &mut [f64], radius: f64) {
    let norm = l2(theta);
    if norm <= radius {
        return;
    }
    let scale = radius / norm;
    theta.iter_mut().for_each(|x| *x *= scale);
    // rounding can leave the norm an ulp above the radius
    while l2(theta) > radius {
        theta.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-row squared loss `(theta . phi - y)^2`.
pub fn squared_loss(theta: &[f64], phi: &[f64], y: f64) -> f64 {
    let pred: f64 = theta.iter().zip(phi).map(|(a, b)| a * b).sum();
    (pred - y).powi(2)
}

/// Gradient `2 (theta . phi - y) phi` of [`squared_loss`].
pub fn squared_loss_gradient(theta: &[f64], phi: &[f64], y: f64) -> Vec<f64> {
    let pred: f64 = theta.iter().zip(phi).map(|(a, b)| a * b).sum();
    phi.iter().map(|p| 2.0 * (pred - y) * p).collect()
}

/// Projected online gradient descent with constant step
/// `eta = W^2 / ((W + H_y) sqrt(N))`, returning the average iterate. One pass
/// visits rows in dataset order; extra passes reshuffle with `seed`.
pub fn fit_projected_sgd(data: &RegressionDataset, passes: usize, seed: u64) -> Result<CriticFit> {
    if data.is_empty() {
        return Err(input("critic dataset is empty"));
    }
    if passes == 0 {
        return Err(input("at least one SGD pass is required"));
    }
    let w_bound = data.norm_bound;
    let h = data.target_bound;
    let steps = data.len() * passes;
    let eta = w_bound * w_bound / ((w_bound + h) * (steps as f64).sqrt());
    let mut theta = vec![0.0; data.dim];
    let mut avg = vec![0.0; data.dim];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = stream_rng(seed, 0x56D);
    for pass in 0..passes {
        if pass > 0 {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            // average includes theta_1 = 0 and excludes the final update
            avg.iter_mut().zip(&theta).for_each(|(a, t)| *a += t);
            let resid = data.predict_row(&theta, i) - data.targets[i];
            let (idx, val) = data.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                theta[j] -= eta * resid * v;
            }
            project_to_ball(&mut theta, w_bound);
        }
    }
    avg.iter_mut().for_each(|a| *a /= steps as f64);
    project_to_ball(&mut avg, w_bound);
    let train_loss = data.loss(&avg);
    Ok(CriticFit { theta: avg, train_loss })
}

const RANK_TOL: f64 = 1e-12;

/// Exact minimizer of the weighted mean squared error over `||theta|| <= W`.
/// Rank-deficient systems return the minimum-norm solution.
pub fn fit_exact_constrained(data: &RegressionDataset) -> Result<CriticFit> {
    if data.is_empty() {
        return Err(input("critic dataset is empty"));
    }
    let (gram, moment) = data.normal_equations();
    let theta = constrained_solve(&gram, &moment, data.norm_bound);
    let train_loss = data.loss(&theta);
    Ok(CriticFit { theta, train_loss })
}

/// `argmin theta^T G theta - 2 b^T theta` over the ball, via the spectrum of `G`.
fn constrained_solve(gram: &Gram, moment: &[f64], radius: f64) -> Vec<f64> {
    let (eigvals, coords, basis): (Vec<f64>, Vec<f64>, Option<DMatrix<f64>>) = match gram {
        Gram::Diagonal(d) => (d.clone(), moment.to_vec(), None),
        Gram::Dense(m) => {
            let eig = SymmetricEigen::new(m.clone());
            let b = DVector::from_column_slice(moment);
            let c = eig.eigenvectors.transpose() * b;
            (eig.eigenvalues.iter().copied().collect(), c.iter().copied().collect(), Some(eig.eigenvectors))
        }
    };
    let scale = eigvals.iter().copied().fold(0.0, f64::max);
    let cutoff = RANK_TOL * scale.max(f64::MIN_POSITIVE);
    let solve = |mu: f64| -> Vec<f64> {
        eigvals
            .iter()
            .zip(&coords)
            .map(|(&l, &c)| if l > cutoff { c / (l + mu) } else { 0.0 })
            .collect()
    };
    let norm_at = |mu: f64| l2(&solve(mu));
    let mu = if norm_at(0.0) <= radius {
        0.0
    } else {
        // ||theta(mu)|| decreases in mu; bracket then bisect to 1e-10
        let mut hi = 1.0f64.max(scale);
        while norm_at(hi) > radius {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if (norm_at(hi) - radius).abs() <= 1e-10 * radius.max(1.0) {
                break;
            }
        }
        hi
    };
    let spectral = solve(mu);
    let mut theta = match basis {
        None => spectral,
        Some(q) => (q * DVector::from_vec(spectral)).iter().copied().collect(),
    };
    project_to_ball(&mut theta, radius);
    theta
}
