//! The NPG inner loop: softmax-linear policies on the known set, critic fits
//! from the restart distribution, exponentiated-gradient actor updates and
//! best-iterate selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{BonusOracle, KnownSet};
use crate::cover::{sample_from_cover, CoverSampling, PolicyCover};
use crate::critic::{fit_exact_constrained, fit_projected_sgd, RegressionDataset};
use crate::environments::FeatureMap;
use crate::error::{input, Error, Result};
use crate::mdp::{q_rollout, sample_index, Policy, RewardFunction, TabularMdp, TabularPolicy, DEFAULT_TAIL};
use crate::oracles::{exact_policy_value, mc_value};

/// `pi(a|s) ∝ exp(w . phi(s, a))` on known states, uniform over bonused
/// actions elsewhere. Probabilities are tabulated at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxLinearPolicy {
    num_actions: usize,
    w: Vec<f64>,
    known: Vec<bool>,
    probs: Vec<f64>,
}

impl SoftmaxLinearPolicy {
    pub fn new(features: &FeatureMap, w: Vec<f64>, known: &KnownSet, bonus: &[f64]) -> Result<Self> {
        if w.len() != features.dim() {
            return Err(Error::Dimension { expected: features.dim(), got: w.len() });
        }
        let s_n = features.num_states();
        let a_n = features.num_actions();
        if known.num_states() != s_n || bonus.len() != s_n * a_n {
            return Err(input("known set or bonus table does not match the feature map"));
        }
        let mut probs = vec![0.0; s_n * a_n];
        let mut logits = vec![0.0; a_n];
        for s in 0..s_n {
            let row = &mut probs[s * a_n..(s + 1) * a_n];
            if known.contains(s) {
                for (a, l) in logits.iter_mut().enumerate() {
                    *l = features.dot(s, a, &w);
                }
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (p, &l) in row.iter_mut().zip(&logits) {
                    *p = (l - max).exp();
                    total += *p;
                }
                row.iter_mut().for_each(|p| *p /= total);
            } else {
                let bonused = bonus[s * a_n..(s + 1) * a_n].iter().filter(|&&b| b > 0.0).count();
                if bonused == 0 {
                    return Err(Error::Internal(format!("state {s} is unknown but has no bonused action")));
                }
                for (p, &b) in row.iter_mut().zip(&bonus[s * a_n..(s + 1) * a_n]) {
                    *p = if b > 0.0 { 1.0 / bonused as f64 } else { 0.0 };
                }
            }
        }
        Ok(SoftmaxLinearPolicy { num_actions: a_n, w, known: (0..s_n).map(|s| known.contains(s)).collect(), probs })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn is_known(&self, s: usize) -> bool {
        self.known[s]
    }

    pub fn to_tabular(&self) -> TabularPolicy {
        TabularPolicy::from_table(self.num_actions, self.probs.clone()).expect("softmax rows are distributions")
    }
}

impl Policy for SoftmaxLinearPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn action_probs(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }
}

pub fn policy_probs(policy: &SoftmaxLinearPolicy, s: usize) -> &[f64] {
    policy.action_probs(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum CriticKind {
    /// Exact minimizer over the `W` ball.
    Exact,
    /// Projected online gradient descent with iterate averaging.
    ProjectedSgd {
        #[serde(default = "one")]
        passes: usize,
    },
}

fn one() -> usize {
    1
}

/// How the returned iterate is chosen among `pi^0..pi^T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum IterateSelection {
    MonteCarlo { rollouts: usize },
    /// Exact policy evaluation (tabular only).
    Exact,
    /// Always the final iterate.
    Last,
}

/// Action at the root of each critic sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootActions {
    /// As drawn by the restart distribution.
    #[default]
    Policy,
    /// Uniform over actions (the transfer comparator's convention).
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NpgConfig {
    /// `T`.
    pub iterations: usize,
    /// `M`, critic samples per iteration.
    pub samples: usize,
    /// Defaults to `sqrt(ln A / (W^2 T))`.
    pub eta: Option<f64>,
    /// Critic ball radius `W`.
    pub norm_bound: f64,
    /// Critic target bound `H_y`; defaults to `2 / (1 - gamma)^2`.
    pub target_bound: Option<f64>,
    pub critic: CriticKind,
    pub selection: IterateSelection,
    pub cover_sampling: CoverSampling,
    pub root_actions: RootActions,
}

impl Default for NpgConfig {
    fn default() -> Self {
        NpgConfig {
            iterations: 10,
            samples: 500,
            eta: None,
            norm_bound: 10.0,
            target_bound: None,
            critic: CriticKind::Exact,
            selection: IterateSelection::MonteCarlo { rollouts: 64 },
            cover_sampling: CoverSampling::Geometric,
            root_actions: RootActions::Policy,
        }
    }
}

impl NpgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.samples == 0 {
            return Err(input("NPG needs T >= 1 and M >= 1"));
        }
        if !(self.norm_bound > 0.0) {
            return Err(input("critic norm bound W must be positive"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(input("step size eta must be positive"));
            }
        }
        if let Some(h) = self.target_bound {
            if !(h > 0.0) {
                return Err(input("target bound must be positive"));
            }
        }
        if let IterateSelection::MonteCarlo { rollouts } = self.selection {
            if rollouts < 2 {
                return Err(input("Monte-Carlo selection needs at least two rollouts"));
            }
        }
        if let CriticKind::ProjectedSgd { passes: 0 } = self.critic {
            return Err(input("SGD critic needs at least one pass"));
        }
        Ok(())
    }

    pub fn step_size(&self, num_actions: usize) -> f64 {
        self.eta.unwrap_or_else(|| {
            ((num_actions as f64).ln() / (self.norm_bound * self.norm_bound * self.iterations as f64)).sqrt()
        })
    }
}

/// Where critic roots come from.
#[derive(Clone, Copy, Debug)]
pub enum Restart<'a> {
    Cover(&'a PolicyCover),
    /// A state distribution with uniform root actions.
    States(&'a [f64]),
}

#[derive(Clone, Debug)]
pub struct NpgOutcome {
    pub policy: SoftmaxLinearPolicy,
    pub best_iteration: usize,
    /// `V(s0; r + b)` estimate of every iterate `pi^0..pi^T`.
    pub iterate_values: Vec<f64>,
    pub critic_losses: Vec<f64>,
}

/// Inputs to [`npg_update`].
pub struct NpgProblem<'a> {
    pub mdp: &'a TabularMdp,
    pub features: &'a FeatureMap,
    /// Environment reward `r`.
    pub reward: &'a RewardFunction,
    pub restart: Restart<'a>,
    /// `None` means `b = 0` and every state known.
    pub bonus: Option<&'a BonusOracle>,
}

/// Runs `T` NPG iterations and returns the best iterate under `r + b`.
pub fn npg_update<R: Rng + ?Sized>(problem: &NpgProblem<'_>, cfg: &NpgConfig, rng: &mut R) -> Result<NpgOutcome> {
    cfg.validate()?;
    let NpgProblem { mdp, features, reward, restart, bonus } = *problem;
    features.check_compatible(mdp)?;
    if mdp.is_episodic() {
        return Err(input("NPG updates need a discounted MDP"));
    }
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let (bonus_table, known) = match bonus {
        Some(oracle) => {
            let table = oracle.bonus_table(features);
            let known = KnownSet::from_bonus_table(a_n, &table);
            (table, known)
        }
        None => (vec![0.0; s_n * a_n], KnownSet::all(s_n, a_n)),
    };
    // the bonus term of the exponentiated update vanishes on the known set
    for s in (0..s_n).filter(|&s| known.contains(s)) {
        if bonus_table[s * a_n..(s + 1) * a_n].iter().any(|&b| b != 0.0) {
            return Err(Error::Internal(format!("known state {s} carries a bonus")));
        }
    }
    let shaped = reward.plus(&bonus_table)?;
    let gamma = mdp.gamma();
    let cap = mdp.horizon_cap(DEFAULT_TAIL)?;
    let eta = cfg.step_size(a_n);
    let target_bound = cfg.target_bound.unwrap_or(2.0 / (1.0 - gamma).powi(2));

    let mut w = vec![0.0; features.dim()];
    let mut current = SoftmaxLinearPolicy::new(features, w.clone(), &known, &bonus_table)?;
    let mut iterates = vec![current.clone()];
    let mut critic_losses = Vec::with_capacity(cfg.iterations);
    let mut rows: Vec<(usize, usize, f64)> = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.iterations {
        rows.clear();
        for _ in 0..cfg.samples {
            let (s, mut a) = match restart {
                Restart::Cover(cover) => sample_from_cover(cover, mdp, rng, &cfg.cover_sampling)?,
                Restart::States(dist) => {
                    if dist.len() != s_n {
                        return Err(Error::Dimension { expected: s_n, got: dist.len() });
                    }
                    (sample_index(dist, rng), rng.random_range(0..a_n))
                }
            };
            if cfg.root_actions == RootActions::Uniform {
                a = rng.random_range(0..a_n);
            }
            let q = q_rollout(mdp, &current, &shaped, s, a, rng, cap);
            rows.push((s, a, q - bonus_table[s * a_n + a]));
        }
        let observed = rows.iter().fold(0.0f64, |m, r| m.max(r.2.abs()));
        let mut data = RegressionDataset::new(features.dim(), target_bound.max(observed), cfg.norm_bound)?;
        for &(s, a, y) in &rows {
            data.push_sparse(features.phi(s, a), features.support(s, a), y, 1.0)?;
        }
        let fit = match cfg.critic {
            CriticKind::Exact => fit_exact_constrained(&data)?,
            CriticKind::ProjectedSgd { passes } => fit_projected_sgd(&data, passes, rng.random())?,
        };
        critic_losses.push(fit.train_loss);
        w.iter_mut().zip(&fit.theta).for_each(|(wi, t)| *wi += eta * t);
        current = SoftmaxLinearPolicy::new(features, w.clone(), &known, &bonus_table)?;
        iterates.push(current.clone());
    }

    let iterate_values = match cfg.selection {
        IterateSelection::Last => vec![f64::NAN; iterates.len()],
        IterateSelection::Exact => iterates
            .iter()
            .map(|pi| exact_policy_value(mdp, pi, &shaped).map(|v| v.value(mdp.start_state())))
            .collect::<Result<Vec<_>>>()?,
        IterateSelection::MonteCarlo { rollouts } => iterates
            .iter()
            .map(|pi| mc_value(mdp, pi, &shaped, rollouts, rng).map(|(m, _)| m))
            .collect::<Result<Vec<_>>>()?,
    };
    let best_iteration = match cfg.selection {
        IterateSelection::Last => iterates.len() - 1,
        _ => {
            let mut best = 0;
            for (i, &v) in iterate_values.iter().enumerate() {
                if v > iterate_values[best] {
                    best = i;
                }
            }
            best
        }
    };
    let policy = iterates.swap_remove(best_iteration);
    Ok(NpgOutcome { policy, best_iteration, iterate_values, critic_losses })
}
