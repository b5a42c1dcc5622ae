//! Policy covers and sampling from their restart distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceMatrix;
use crate::error::{input, Error, Result};
use crate::mdp::{sample_discounted_pair, sample_index, Policy, StartDistribution, TabularMdp, TabularPolicy};
use crate::oracles::{mixture_occupancy, OccupancyVector};

/// Ordered policies with their empirical feature covariances and the simplex
/// weights `alpha` of the restart distribution `rho_mix = sum_i alpha_i d^{pi_i}`.
#[derive(Clone, Debug, Default)]
pub struct PolicyCover {
    policies: Vec<TabularPolicy>,
    covariances: Vec<CovarianceMatrix>,
    weights: Vec<f64>,
}

impl PolicyCover {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a policy and resets the weights to the flat average.
    pub fn push(&mut self, policy: TabularPolicy, covariance: CovarianceMatrix) -> Result<()> {
        if let Some(first) = self.covariances.first() {
            if first.dim() != covariance.dim() {
                return Err(Error::Dimension { expected: first.dim(), got: covariance.dim() });
            }
        }
        self.policies.push(policy);
        self.covariances.push(covariance);
        let n = self.policies.len();
        self.weights = vec![1.0 / n as f64; n];
        Ok(())
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.policies.len() {
            return Err(Error::Dimension { expected: self.policies.len(), got: weights.len() });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(input("cover weights must lie on the simplex"));
        }
        self.weights = weights;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policies(&self) -> &[TabularPolicy] {
        &self.policies
    }

    pub fn covariances(&self) -> &[CovarianceMatrix] {
        &self.covariances
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unweighted `sum_i Sigma_i`; rebalanced weights never enter the bonus.
    pub fn covariance_sum(&self) -> Result<CovarianceMatrix> {
        let first = self.covariances.first().ok_or_else(|| input("cover is empty"))?;
        CovarianceMatrix::sum(first.dim(), &self.covariances)
    }

    /// Exact `rho_mix` for tabular MDPs.
    pub fn exact_restart(&self, mdp: &TabularMdp) -> Result<OccupancyVector> {
        mixture_occupancy(mdp, &self.policies, &self.weights)
    }
}

/// How root pairs are drawn from a cover.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum CoverSampling {
    /// Pick `pi_i` by weight, then one draw from `d^{pi_i}`.
    Geometric,
    /// Pick `pi_i` by weight, follow it for `h ~ Unif{0..horizon-1}` steps,
    /// then take an epsilon-greedy handoff action.
    Rollin {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        horizon: usize,
    },
}

fn default_epsilon() -> f64 {
    0.05
}

pub fn sample_from_cover<R: Rng + ?Sized>(
    cover: &PolicyCover,
    mdp: &TabularMdp,
    rng: &mut R,
    mode: &CoverSampling,
) -> Result<(usize, usize)> {
    if cover.is_empty() {
        return Err(input("cannot sample from an empty cover"));
    }
    let i = sample_index(&cover.weights, rng);
    let pi = &cover.policies[i];
    match *mode {
        CoverSampling::Geometric => {
            let p = sample_discounted_pair(mdp, pi, &StartDistribution::StartState, rng, None)?;
            Ok((p.state, p.action))
        }
        CoverSampling::Rollin { epsilon, horizon } => {
            if horizon == 0 || !(0.0..=1.0).contains(&epsilon) {
                return Err(input("roll-in needs horizon >= 1 and epsilon in [0, 1]"));
            }
            let steps = rng.random_range(0..horizon);
            let mut s = mdp.start_state();
            for _ in 0..steps {
                let a = pi.sample_action(s, rng);
                let next = mdp.sample_next(s, a, rng);
                if mdp.is_terminal(next) {
                    break;
                }
                s = next;
            }
            let a = if rng.random::<f64>() < epsilon {
                rng.random_range(0..mdp.num_actions())
            } else {
                pi.sample_action(s, rng)
            };
            Ok((s, a))
        }
    }
}
