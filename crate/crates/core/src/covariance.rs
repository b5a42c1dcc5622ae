//! Feature covariances, regularized inverses, exploration bonuses and the
//! log-det quantities built on them.
//!
//! One-hot and aggregation features produce exactly diagonal covariances. Every
//! routine detects that case and skips the dense factorization, which keeps
//! `d = |S||A|` in the hundreds cheap.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::environments::FeatureMap;
use crate::error::{input, Error, Result};
use crate::mdp::TabularMdp;

const SYM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-9;

/// Symmetric PSD `d x d` matrix, usually the mean of `phi phi^T` over samples.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
    sample_count: usize,
}

impl CovarianceMatrix {
    pub fn zeros(dim: usize) -> Self {
        CovarianceMatrix { matrix: DMatrix::zeros(dim, dim), sample_count: 0 }
    }

    /// Validates symmetry (within 1e-12) and positive semi-definiteness
    /// (smallest eigenvalue at least -1e-9).
    pub fn from_matrix(matrix: DMatrix<f64>, sample_count: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension { expected: matrix.nrows(), got: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(input("covariance has non-finite entries"));
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in i + 1..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYM_TOL {
                    return Err(input(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        let cov = CovarianceMatrix { matrix: symmetrize(matrix), sample_count };
        let min = cov.min_eigenvalue();
        if min < PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(cov)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn is_diagonal(&self) -> bool {
        is_diagonal(&self.matrix)
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&v| v == 0.0)
    }

    fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        if self.is_diagonal() {
            return self.matrix.diagonal().min();
        }
        SymmetricEigen::new(self.matrix.clone()).eigenvalues.min()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = if self.is_diagonal() {
            self.matrix.diagonal().iter().copied().collect()
        } else {
            SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect()
        };
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Matrix sum; sample counts add.
    pub fn sum<'a, I>(dim: usize, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a CovarianceMatrix>,
    {
        let mut total = CovarianceMatrix::zeros(dim);
        for c in items {
            total.add_assign(c)?;
        }
        Ok(total)
    }

    pub fn add_assign(&mut self, other: &CovarianceMatrix) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: other.dim() });
        }
        self.matrix += &other.matrix;
        self.sample_count += other.sample_count;
        Ok(())
    }

    /// `sum_i alpha_i Sigma_i`.
    pub fn weighted_sum(dim: usize, items: &[CovarianceMatrix], weights: &[f64]) -> Result<Self> {
        if items.len() != weights.len() {
            return Err(Error::Dimension { expected: items.len(), got: weights.len() });
        }
        let mut m = DMatrix::zeros(dim, dim);
        for (c, &w) in items.iter().zip(weights) {
            if c.dim() != dim {
                return Err(Error::Dimension { expected: dim, got: c.dim() });
            }
            if w != 0.0 {
                m += &c.matrix * w;
            }
        }
        Ok(CovarianceMatrix { matrix: m, sample_count: items.iter().map(|c| c.sample_count).sum() })
    }

    pub fn to_document(&self) -> CovarianceDocument {
        CovarianceDocument {
            dim: self.dim(),
            sample_count: self.sample_count,
            rows: self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn from_document(doc: &CovarianceDocument) -> Result<Self> {
        if doc.rows.len() != doc.dim || doc.rows.iter().any(|r| r.len() != doc.dim) {
            return Err(input("covariance rows must form a dim x dim array"));
        }
        let m = DMatrix::from_fn(doc.dim, doc.dim, |i, j| doc.rows[i][j]);
        CovarianceMatrix::from_matrix(m, doc.sample_count)
    }
}

/// JSON form of a covariance matrix (row-major nested arrays).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceDocument {
    pub dim: usize,
    pub sample_count: usize,
    pub rows: Vec<Vec<f64>>,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == 0.0))
}

/// Mean of `phi phi^T` over a stream of dense vectors.
pub fn accumulate_covariance<'a, I>(dim: usize, features: I) -> Result<CovarianceMatrix>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc = CovarianceAccumulator::new(dim);
    for phi in features {
        acc.push_dense(phi)?;
    }
    Ok(acc.finish())
}

/// Running sum of outer products. Sparse rows cost `O(nnz^2)`.
#[derive(Clone, Debug)]
pub struct CovarianceAccumulator {
    sum: DMatrix<f64>,
    count: usize,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        CovarianceAccumulator { sum: DMatrix::zeros(dim, dim), count: 0 }
    }

    pub fn push_dense(&mut self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.sum.nrows() {
            return Err(Error::Dimension { expected: self.sum.nrows(), got: phi.len() });
        }
        let support: Vec<usize> = (0..phi.len()).filter(|&i| phi[i] != 0.0).collect();
        self.push_sparse(phi, &support);
        Ok(())
    }

    /// `phi` restricted to `support`; entries outside must be zero.
    #[inline]
    pub fn push_sparse(&mut self, phi: &[f64], support: &[usize]) {
        for &i in support {
            for &j in support {
                self.sum[(i, j)] += phi[i] * phi[j];
            }
        }
        self.count += 1;
    }

    pub fn push_pair(&mut self, features: &FeatureMap, s: usize, a: usize) {
        self.push_sparse(features.phi(s, a), features.support(s, a));
    }

    /// Partial sums from independent workers combine associatively.
    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        self.sum += &other.sum;
        self.count += other.count;
    }

    pub fn finish(self) -> CovarianceMatrix {
        let n = self.count;
        let matrix = if n == 0 { self.sum } else { self.sum / n as f64 };
        CovarianceMatrix { matrix, sample_count: n }
    }
}

#[derive(Clone, Debug)]
enum Inverse {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

/// Cached `(Sigma + lambda I)^{-1}`.
#[derive(Clone, Debug)]
pub struct RegularizedInverse {
    lambda: f64,
    inverse: Inverse,
    log_det: f64,
}

impl RegularizedInverse {
    /// Eigendecomposition with eigenvalues floored at 0 before adding
    /// `lambda`, so every eigenvalue of the regularized matrix is at least
    /// `lambda`.
    pub fn new(base: &CovarianceMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(input(format!("ridge lambda must be positive, got {lambda}")));
        }
        let d = base.dim();
        if base.is_diagonal() {
            let diag: Vec<f64> = base.matrix.diagonal().iter().map(|&v| 1.0 / (v.max(0.0) + lambda)).collect();
            let log_det = diag.iter().map(|v| -v.ln()).sum();
            return Ok(RegularizedInverse { lambda, inverse: Inverse::Diagonal(diag), log_det });
        }
        let eig = SymmetricEigen::new(base.matrix.clone());
        let shifted: DVector<f64> = eig.eigenvalues.map(|v| v.max(0.0) + lambda);
        let log_det = shifted.iter().map(|v| v.ln()).sum();
        let inv_diag = DMatrix::from_diagonal(&shifted.map(|v| 1.0 / v));
        let q = &eig.eigenvectors;
        let inv = symmetrize(q * inv_diag * q.transpose());
        debug_assert_eq!(inv.nrows(), d);
        Ok(RegularizedInverse { lambda, inverse: Inverse::Dense(inv), log_det })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        match &self.inverse {
            Inverse::Diagonal(d) => d.len(),
            Inverse::Dense(m) => m.nrows(),
        }
    }

    /// `log det(Sigma + lambda I)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        match &self.inverse {
            Inverse::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Inverse::Dense(m) => m.clone(),
        }
    }

    /// `v^T (Sigma + lambda I)^{-1} v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let support: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
        self.quadratic_form_sparse(v, &support)
    }

    #[inline]
    pub fn quadratic_form_sparse(&self, v: &[f64], support: &[usize]) -> f64 {
        match &self.inverse {
            Inverse::Diagonal(d) => support.iter().map(|&i| v[i] * v[i] * d[i]).sum(),
            Inverse::Dense(m) => {
                let mut total = 0.0;
                for &i in support {
                    let mut row = 0.0;
                    for &j in support {
                        row += m[(i, j)] * v[j];
                    }
                    total += v[i] * row;
                }
                total
            }
        }
    }
}

/// Elliptical bonus `b(s, a) = 1{phi^T (Sigma_mix + lambda I)^{-1} phi >= beta} / (1 - gamma)`.
#[derive(Clone, Debug)]
pub struct BonusOracle {
    inv: RegularizedInverse,
    beta: f64,
    gamma: f64,
}

impl BonusOracle {
    pub fn new(inv: RegularizedInverse, beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(input(format!("bonus threshold beta must be positive, got {beta}")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(input(format!("bonuses need gamma in [0, 1), got {gamma}")));
        }
        Ok(BonusOracle { inv, beta, gamma })
    }

    pub fn inverse(&self) -> &RegularizedInverse {
        &self.inv
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn magnitude(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub fn bonus_at(&self, features: &FeatureMap, s: usize, a: usize) -> f64 {
        let form = self.inv.quadratic_form_sparse(features.phi(s, a), features.support(s, a));
        if form >= self.beta {
            self.magnitude()
        } else {
            0.0
        }
    }

    /// Bonus for every pair, indexed `s * |A| + a`.
    pub fn bonus_table(&self, features: &FeatureMap) -> Vec<f64> {
        let a_n = features.num_actions();
        (0..features.num_states() * a_n).map(|p| self.bonus_at(features, p / a_n, p % a_n)).collect()
    }
}

pub fn bonus(phi: &[f64], oracle: &BonusOracle) -> f64 {
    if oracle.inv.quadratic_form(phi) >= oracle.beta {
        oracle.magnitude()
    } else {
        0.0
    }
}

/// States whose every action carries zero bonus, plus the pair-level mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownSet {
    num_actions: usize,
    pair_known: Vec<bool>,
    state_known: Vec<bool>,
}

impl KnownSet {
    pub fn from_bonus_table(num_actions: usize, bonus: &[f64]) -> Self {
        let pair_known: Vec<bool> = bonus.iter().map(|&b| b == 0.0).collect();
        let state_known = pair_known.chunks(num_actions).map(|r| r.iter().all(|&k| k)).collect();
        KnownSet { num_actions, pair_known, state_known }
    }

    pub fn all(num_states: usize, num_actions: usize) -> Self {
        KnownSet::from_bonus_table(num_actions, &vec![0.0; num_states * num_actions])
    }

    pub fn contains(&self, s: usize) -> bool {
        self.state_known[s]
    }

    pub fn pair_known(&self, s: usize, a: usize) -> bool {
        self.pair_known[s * self.num_actions + a]
    }

    pub fn pair_mask(&self) -> &[bool] {
        &self.pair_known
    }

    pub fn num_states(&self) -> usize {
        self.state_known.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn known_states(&self) -> usize {
        self.state_known.iter().filter(|&&k| k).count()
    }

    pub fn fraction(&self) -> f64 {
        self.known_states() as f64 / self.state_known.len() as f64
    }
}

pub fn known_set(oracle: &BonusOracle, mdp: &TabularMdp, features: &FeatureMap) -> Result<KnownSet> {
    features.check_compatible(mdp)?;
    Ok(KnownSet::from_bonus_table(mdp.num_actions(), &oracle.bonus_table(features)))
}

/// `log det(I + sum_i Sigma_i / lambda)`.
pub fn information_gain(covariances: &[CovarianceMatrix], lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(input(format!("lambda must be positive, got {lambda}")));
    }
    let Some(first) = covariances.first() else {
        return Ok(0.0);
    };
    let total = CovarianceMatrix::sum(first.dim(), covariances)?;
    let min = total.min_eigenvalue();
    if min < PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(log_det_regularized(&total, lambda) - total.dim() as f64 * lambda.ln())
}

/// `log det(Sigma + lambda I)` with eigenvalues floored at zero.
pub fn log_det_regularized(cov: &CovarianceMatrix, lambda: f64) -> f64 {
    cov.eigenvalues().iter().map(|&v| (v.max(0.0) + lambda).ln()).sum()
}

/// `trace(Sigma) / ||Sigma||_op`.
pub fn intrinsic_dimension(cov: &CovarianceMatrix) -> Result<f64> {
    let ev = cov.eigenvalues();
    let top = ev.last().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(input("intrinsic dimension of a zero matrix is undefined"));
    }
    Ok(ev.iter().map(|v| v.max(0.0)).sum::<f64>() / top)
}

/// `trace((Sigma_den + lambda I)^{-1} Sigma_num)`.
pub fn relative_condition(num: &CovarianceMatrix, den: &CovarianceMatrix, lambda: f64) -> Result<f64> {
    if num.dim() != den.dim() {
        return Err(Error::Dimension { expected: den.dim(), got: num.dim() });
    }
    if lambda < 0.0 {
        return Err(input("lambda must be non-negative"));
    }
    let d = den.dim();
    let reg = den.matrix() + DMatrix::identity(d, d) * lambda;
    let chol = reg
        .cholesky()
        .ok_or_else(|| Error::Singular("denominator covariance is not positive definite".into()))?;
    Ok(chol.solve(num.matrix()).trace())
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Mixture weights that increase `log det(sum_i alpha_i Sigma_i + lambda I)`
/// by projected gradient ascent. The best iterate is returned, so the
/// objective is never below its value at the uniform mixture.
pub fn rebalance_weights(covariances: &[CovarianceMatrix], lambda: f64, iters: usize, step: f64) -> Result<Vec<f64>> {
    let n = covariances.len();
    if n == 0 {
        return Err(input("rebalancing needs at least one covariance"));
    }
    let uniform = vec![1.0 / n as f64; n];
    if n == 1 || covariances.iter().all(|c| c.is_zero()) {
        return Ok(uniform);
    }
    let dim = covariances[0].dim();
    let diagonal = covariances.iter().all(|c| c.is_diagonal());
    let objective_and_grad = |alpha: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mix = CovarianceMatrix::weighted_sum(dim, covariances, alpha)?;
        if diagonal {
            let diag: Vec<f64> = mix.matrix.diagonal().iter().map(|&v| v.max(0.0) + lambda).collect();
            let obj = diag.iter().map(|v| v.ln()).sum();
            let grad = covariances
                .iter()
                .map(|c| c.matrix.diagonal().iter().zip(&diag).map(|(s, m)| s / m).sum())
                .collect();
            Ok((obj, grad))
        } else {
            let inv = RegularizedInverse::new(&mix, lambda)?;
            let m = inv.inverse_matrix();
            let grad = covariances.iter().map(|c| m.component_mul(c.matrix()).sum()).collect();
            Ok((inv.log_det(), grad))
        }
    };
    let (mut best_obj, mut grad) = objective_and_grad(&uniform)?;
    let mut best = uniform.clone();
    let mut alpha = uniform;
    for _ in 0..iters {
        let stepped: Vec<f64> = alpha.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        alpha = project_to_simplex(&stepped);
        let (obj, g) = objective_and_grad(&alpha)?;
        grad = g;
        if obj > best_obj {
            best_obj = obj;
            best = alpha.clone();
        }
    }
    Ok(best)
}
