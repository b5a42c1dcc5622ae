//! Exact dynamic-programming ground truth for tabular MDPs and the
//! diagnostics that make theoretical quantities measurable.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::critic::{fit_exact_constrained, RegressionDataset};
use crate::environments::FeatureMap;
use crate::error::{config, input, Error, Result};
use crate::mdp::{
    discounted_rollout_return, Policy, RewardFunction, StartDistribution, TabularMdp, TabularPolicy, DEFAULT_TAIL,
};

/// `V(s)` and `Q(s, a)` of one policy under one reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub num_actions: usize,
    pub v: Vec<f64>,
    /// Indexed `s * |A| + a`.
    pub q: Vec<f64>,
}

impl ValueTable {
    pub fn value(&self, s: usize) -> f64 {
        self.v[s]
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.num_actions + a]
    }

    pub fn advantage(&self, s: usize, a: usize) -> f64 {
        self.q(s, a) - self.v[s]
    }
}

/// Discounted state-action occupancy (sums to 1), or the expected visit
/// counts per episode in episodic mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVector {
    pub num_actions: usize,
    /// Indexed `s * |A| + a`.
    pub values: Vec<f64>,
    pub discounted: bool,
}

impl OccupancyVector {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.values.chunks(self.num_actions).map(|r| r.iter().sum()).collect()
    }

    /// `sum_{s,a} d(s,a) f(s,a)`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.values.iter().zip(f).map(|(d, x)| d * x).sum()
    }
}

fn check_shapes<P: Policy + ?Sized>(mdp: &TabularMdp, policy: &P, reward: &RewardFunction) -> Result<()> {
    if policy.num_actions() != mdp.num_actions() {
        return Err(input("policy and MDP disagree on |A|"));
    }
    if reward.table().len() != mdp.num_pairs() {
        return Err(Error::Dimension { expected: mdp.num_pairs(), got: reward.table().len() });
    }
    Ok(())
}

/// States that carry value: all of them when discounted, the non-terminal
/// ones in episodic mode (terminal states are worth 0 by convention).
fn live_states(mdp: &TabularMdp) -> Vec<usize> {
    (0..mdp.num_states()).filter(|&s| !(mdp.is_episodic() && mdp.is_terminal(s))).collect()
}

/// Solves `(I - gamma P_pi) V = r_pi` by LU with partial pivoting.
pub fn exact_policy_value<P: Policy + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
    reward: &RewardFunction,
) -> Result<ValueTable> {
    check_shapes(mdp, policy, reward)?;
    if mdp.is_episodic() && mdp.episode_bound().is_none() {
        return Err(config("undiscounted evaluation needs an absorbing MDP"));
    }
    let gamma = mdp.gamma();
    let a_n = mdp.num_actions();
    let live = live_states(mdp);
    let mut pos = vec![usize::MAX; mdp.num_states()];
    for (i, &s) in live.iter().enumerate() {
        pos[s] = i;
    }
    let n = live.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, &s) in live.iter().enumerate() {
        for (a, &p_a) in policy.action_probs(s).iter().enumerate() {
            if p_a == 0.0 {
                continue;
            }
            rhs[i] += p_a * reward.value(s, a);
            for &(next, p) in mdp.successors(s, a) {
                if pos[next] != usize::MAX {
                    m[(i, pos[next])] -= gamma * p_a * p;
                }
            }
        }
    }
    let sol = m.lu().solve(&rhs).ok_or_else(|| Error::Singular("policy evaluation system".into()))?;
    let mut v = vec![0.0; mdp.num_states()];
    for (i, &s) in live.iter().enumerate() {
        v[s] = sol[i];
    }
    let q = q_from_v(mdp, reward, &v, &pos);
    Ok(ValueTable { num_actions: a_n, v, q })
}

fn q_from_v(mdp: &TabularMdp, reward: &RewardFunction, v: &[f64], pos: &[usize]) -> Vec<f64> {
    let gamma = mdp.gamma();
    let mut q = vec![0.0; mdp.num_pairs()];
    for s in 0..mdp.num_states() {
        if pos[s] == usize::MAX {
            continue;
        }
        for a in 0..mdp.num_actions() {
            let cont: f64 = mdp.successors(s, a).iter().map(|&(n, p)| p * v[n]).sum();
            q[s * mdp.num_actions() + a] = reward.value(s, a) + gamma * cont;
        }
    }
    q
}

/// Optimal values and the greedy policy (ties go to the lowest action).
/// Iterates until successive value functions differ by at most `tol` in sup
/// norm.
pub fn value_iteration(mdp: &TabularMdp, reward: &RewardFunction, tol: f64) -> Result<(ValueTable, TabularPolicy)> {
    if reward.table().len() != mdp.num_pairs() {
        return Err(Error::Dimension { expected: mdp.num_pairs(), got: reward.table().len() });
    }
    if !(tol > 0.0) {
        return Err(input("value iteration tolerance must be positive"));
    }
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let live = live_states(mdp);
    let mut pos = vec![usize::MAX; s_n];
    for (i, &s) in live.iter().enumerate() {
        pos[s] = i;
    }
    let mut v = vec![0.0; s_n];
    loop {
        let q = q_from_v(mdp, reward, &v, &pos);
        let mut delta: f64 = 0.0;
        let mut next = vec![0.0; s_n];
        for &s in &live {
            let best = q[s * a_n..(s + 1) * a_n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            next[s] = best;
        }
        v = next;
        if delta <= tol {
            break;
        }
    }
    let q = q_from_v(mdp, reward, &v, &pos);
    let actions: Vec<usize> = (0..s_n)
        .map(|s| {
            let row = &q[s * a_n..(s + 1) * a_n];
            let mut best = 0;
            for a in 1..a_n {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    let policy = TabularPolicy::deterministic(&actions, a_n)?;
    Ok((ValueTable { num_actions: a_n, v, q }, policy))
}

/// Solves the flow equations `d = (1 - gamma) nu + gamma P_pi^T d`.
pub fn exact_occupancy<P: Policy + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
    init: &StartDistribution,
) -> Result<OccupancyVector> {
    if policy.num_actions() != mdp.num_actions() {
        return Err(input("policy and MDP disagree on |A|"));
    }
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let episodic = mdp.is_episodic();
    let gamma = mdp.gamma();
    let root = root_pairs(mdp, policy, init)?;
    let live = live_states(mdp);
    let mut pos = vec![usize::MAX; s_n];
    for (i, &s) in live.iter().enumerate() {
        pos[s] = i;
    }
    if episodic && root.iter().enumerate().any(|(p, &w)| w > 0.0 && pos[p / a_n] == usize::MAX) {
        return Err(input("episodic occupancy cannot start in a terminal state"));
    }
    let weight = if episodic { 1.0 } else { 1.0 - gamma };
    // g(s): occupancy mass at steps >= 1, solved on live states
    let n = live.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for &s in &live {
        for a in 0..a_n {
            let nu = root[s * a_n + a];
            let pa = policy.action_probs(s)[a];
            for &(next, p) in mdp.successors(s, a) {
                let j = pos[next];
                if j == usize::MAX {
                    continue;
                }
                rhs[j] += gamma * weight * nu * p;
                if pa > 0.0 {
                    m[(j, pos[s])] -= gamma * pa * p;
                }
            }
        }
    }
    let g = m.lu().solve(&rhs).ok_or_else(|| Error::Singular("occupancy flow system".into()))?;
    let mut values = vec![0.0; s_n * a_n];
    for &s in &live {
        let probs = policy.action_probs(s);
        for a in 0..a_n {
            values[s * a_n + a] = weight * root[s * a_n + a] + probs[a] * g[pos[s]];
        }
    }
    Ok(OccupancyVector { num_actions: a_n, values, discounted: !episodic })
}

fn root_pairs<P: Policy + ?Sized>(mdp: &TabularMdp, policy: &P, init: &StartDistribution) -> Result<Vec<f64>> {
    let a_n = mdp.num_actions();
    let mut root = vec![0.0; mdp.num_pairs()];
    let states = match init {
        StartDistribution::StartState => {
            let mut v = vec![0.0; mdp.num_states()];
            v[mdp.start_state()] = 1.0;
            v
        }
        StartDistribution::States(d) => {
            if d.len() != mdp.num_states() {
                return Err(Error::Dimension { expected: mdp.num_states(), got: d.len() });
            }
            d.clone()
        }
        StartDistribution::Pairs(d) => {
            if d.len() != mdp.num_pairs() {
                return Err(Error::Dimension { expected: mdp.num_pairs(), got: d.len() });
            }
            return Ok(d.clone());
        }
    };
    for (s, &w) in states.iter().enumerate() {
        for (a, &p) in policy.action_probs(s).iter().enumerate() {
            root[s * a_n + a] = w * p;
        }
    }
    Ok(root)
}

/// `sum_i alpha_i d^{pi_i}` from the start state.
pub fn mixture_occupancy(mdp: &TabularMdp, policies: &[TabularPolicy], weights: &[f64]) -> Result<OccupancyVector> {
    if policies.is_empty() || policies.len() != weights.len() {
        return Err(input("mixture needs one weight per policy"));
    }
    let mut values = vec![0.0; mdp.num_pairs()];
    for (pi, &w) in policies.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let d = exact_occupancy(mdp, pi, &StartDistribution::StartState)?;
        values.iter_mut().zip(&d.values).for_each(|(x, y)| *x += w * y);
    }
    Ok(OccupancyVector { num_actions: mdp.num_actions(), values, discounted: !mdp.is_episodic() })
}

/// `max_pi sum_{(s,a) unknown} d^pi(s,a)` by value iteration on the indicator
/// reward of pairs outside the known mask.
pub fn max_escape_probability(mdp: &TabularMdp, known_pairs: &[bool]) -> Result<f64> {
    if mdp.is_episodic() {
        return Err(config("escape probability is defined for discounted MDPs"));
    }
    if known_pairs.len() != mdp.num_pairs() {
        return Err(Error::Dimension { expected: mdp.num_pairs(), got: known_pairs.len() });
    }
    let table = known_pairs.iter().map(|&k| if k { 0.0 } else { 1.0 }).collect();
    let reward = RewardFunction::from_table(mdp.num_actions(), table)?;
    let (values, _) = value_iteration(mdp, &reward, 1e-12)?;
    Ok(((1.0 - mdp.gamma()) * values.value(mdp.start_state())).min(1.0))
}

/// `sum_{(s,a) unknown} d^pi(s,a)`.
pub fn escape_probability<P: Policy + ?Sized>(mdp: &TabularMdp, policy: &P, known_pairs: &[bool]) -> Result<f64> {
    let d = exact_occupancy(mdp, policy, &StartDistribution::StartState)?;
    let mass: f64 = d.values.iter().zip(known_pairs).filter(|(_, &k)| !k).map(|(v, _)| v).sum();
    // an empty float sum is -0.0
    Ok(if mass > 0.0 { mass.min(1.0) } else { 0.0 })
}

/// Comparator state-action distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorMode {
    /// `d^{pi*}(s) Unif(a)`.
    #[default]
    UniformActions,
    /// `d^{pi*}(s, a)`.
    OnPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// `L(theta*; d*, Q - b)`.
    pub transfer_error: f64,
    /// `L(theta*; rho_mix, Q - b)`.
    pub on_policy_loss: f64,
    pub theta: Vec<f64>,
}

/// Inputs of [`transfer_error_diagnostic`].
pub struct TransferProblem<'a, P: Policy + ?Sized, C: Policy + ?Sized> {
    pub mdp: &'a TabularMdp,
    pub features: &'a FeatureMap,
    /// Restart distribution `rho_mix` over pairs.
    pub rho_mix: &'a OccupancyVector,
    pub policy: &'a P,
    /// Environment reward `r`.
    pub reward: &'a RewardFunction,
    /// Bonus table `b`.
    pub bonus: &'a [f64],
    pub comparator: &'a C,
    pub comparator_mode: ComparatorMode,
    pub norm_bound: f64,
}

/// Prediction error under the comparator of a best on-policy fit of
/// `Q^pi(.; r + b) - b`.
///
/// When `rho_mix` does not identify the fit, the minimizer set is an affine
/// subspace; the member that transfers best to the comparator is used.
pub fn transfer_error_diagnostic<P, C>(problem: &TransferProblem<'_, P, C>) -> Result<TransferReport>
where
    P: Policy + ?Sized,
    C: Policy + ?Sized,
{
    let TransferProblem { mdp, features, rho_mix, policy, reward, bonus, comparator, comparator_mode, norm_bound } =
        *problem;
    features.check_compatible(mdp)?;
    if mdp.is_episodic() {
        return Err(config("transfer diagnostic needs a discounted MDP"));
    }
    let a_n = mdp.num_actions();
    let shaped = reward.plus(bonus)?;
    let values = exact_policy_value(mdp, policy, &shaped)?;
    let target: Vec<f64> = values.q.iter().zip(bonus).map(|(q, b)| q - b).collect();
    let star = exact_occupancy(mdp, comparator, &StartDistribution::StartState)?;
    let d_star: Vec<f64> = match comparator_mode {
        ComparatorMode::OnPolicy => star.values.clone(),
        ComparatorMode::UniformActions => {
            let marg = star.state_marginal();
            (0..mdp.num_pairs()).map(|p| marg[p / a_n] / a_n as f64).collect()
        }
    };

    let bound = target.iter().fold(1.0f64, |m, y| m.max(y.abs())) * 2.0;
    let mut data = RegressionDataset::new(features.dim(), bound, norm_bound)?;
    for p in 0..mdp.num_pairs() {
        let (s, a) = (p / a_n, p % a_n);
        data.push_sparse(features.phi(s, a), features.support(s, a), target[p], rho_mix.values[p])?;
    }
    let base = fit_exact_constrained(&data)?;
    let theta = best_transfer_in_argmin(features, &rho_mix.values, &d_star, &target, base.theta, norm_bound);
    let loss = |dist: &[f64]| -> f64 {
        (0..mdp.num_pairs())
            .map(|p| dist[p] * (features.dot(p / a_n, p % a_n, &theta) - target[p]).powi(2))
            .sum::<f64>()
            / dist.iter().sum::<f64>()
    };
    Ok(TransferReport { transfer_error: loss(&d_star), on_policy_loss: loss(&rho_mix.values), theta })
}

fn weighted_gram(features: &FeatureMap, weights: &[f64], target: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let d = features.dim();
    let a_n = features.num_actions();
    let mut g = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for (p, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (s, a) = (p / a_n, p % a_n);
        let phi = features.phi(s, a);
        for &i in features.support(s, a) {
            b[i] += w * phi[i] * target[p];
            for &j in features.support(s, a) {
                g[(i, j)] += w * phi[i] * phi[j];
            }
        }
    }
    (g, b)
}

/// Moves `theta0` along the null space of the `rho` Gram matrix (which leaves
/// the on-policy loss unchanged) to minimize the comparator loss, staying in
/// the ball.
fn best_transfer_in_argmin(
    features: &FeatureMap,
    rho: &[f64],
    d_star: &[f64],
    target: &[f64],
    theta0: Vec<f64>,
    radius: f64,
) -> Vec<f64> {
    let (g_rho, _) = weighted_gram(features, rho, target);
    let eig = SymmetricEigen::new(g_rho);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let null: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] <= 1e-12 * top.max(1e-300)).collect();
    if null.is_empty() {
        return theta0;
    }
    let basis = eig.eigenvectors.select_columns(&null);
    let (g_star, b_star) = weighted_gram(features, d_star, target);
    let t0 = DVector::from_column_slice(&theta0);
    let h = basis.transpose() * &g_star * &basis;
    let rhs = basis.transpose() * (b_star - &g_star * &t0);
    let he = SymmetricEigen::new(h);
    let htop = he.eigenvalues.iter().copied().fold(0.0, f64::max);
    let coords = he.eigenvectors.transpose() * rhs;
    let z_eig = DVector::from_iterator(
        coords.len(),
        coords.iter().zip(he.eigenvalues.iter()).map(|(&c, &l)| if l > 1e-12 * htop.max(1e-300) { c / l } else { 0.0 }),
    );
    let mut step = &basis * (&he.eigenvectors * z_eig);
    let n0 = t0.norm_squared();
    let ns = step.norm_squared();
    if n0 + ns > radius * radius && ns > 0.0 {
        step *= ((radius * radius - n0).max(0.0) / ns).sqrt();
    }
    let mut theta: Vec<f64> = (t0 + step).iter().copied().collect();
    crate::critic::project_to_ball(&mut theta, radius);
    theta
}

/// Sample mean and standard error of truncated discounted returns from the
/// start state (episodic MDPs run to absorption).
pub fn mc_value<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    reward: &RewardFunction,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<(f64, f64)>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    check_shapes(mdp, policy, reward)?;
    if n_rollouts < 2 {
        return Err(input("Monte-Carlo value needs at least two rollouts"));
    }
    let cap = mdp.horizon_cap(DEFAULT_TAIL)?;
    let returns: Vec<f64> =
        (0..n_rollouts).map(|_| discounted_rollout_return(mdp, policy, reward, rng, cap)).collect();
    let n = n_rollouts as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{build_bandit, build_chain, build_combolock};

    fn self_loop(gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0, gamma).unwrap()
    }

    #[test]
    fn absorbing_loop_value() {
        let mdp = self_loop(0.9);
        let v = exact_policy_value(&mdp, &TabularPolicy::uniform(1, 1), &RewardFunction::from_mdp(&mdp)).unwrap();
        assert!((v.value(0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_state_cycle_hand_solve() {
        let p = vec![0.0, 1.0, 1.0, 0.0];
        let mdp = TabularMdp::new(2, 1, p, vec![1.0, 0.0], 0, 0.5).unwrap();
        let v = exact_policy_value(&mdp, &TabularPolicy::uniform(2, 1), &RewardFunction::from_mdp(&mdp)).unwrap();
        // V0 = 1 + 0.5 V1, V1 = 0.5 V0
        assert!((v.value(0) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn combolock_optimal_return() {
        let lock = build_combolock(2, (5.0, 2.0), 0).unwrap();
        let (vals, pi) = value_iteration(&lock.mdp, &RewardFunction::from_mdp(&lock.mdp), 1e-12).unwrap();
        let shift = lock.mdp.reward_shift().unwrap();
        assert!((shift.raw_episode_return(vals.value(0)) - 4.0).abs() < 1e-9);
        let v = exact_policy_value(&lock.mdp, &pi, &RewardFunction::from_mdp(&lock.mdp)).unwrap();
        assert!((shift.raw_episode_return(v.value(0)) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_examples() {
        let mdp = build_bandit(&[0.2, 0.7], 0.0).unwrap();
        let (v, pi) = value_iteration(&mdp, &RewardFunction::from_mdp(&mdp), 1e-12).unwrap();
        assert!((v.value(0) - 0.7).abs() < 1e-12);
        assert_eq!(pi.action_probs(0), &[0.0, 1.0]);
        let (v, _) = value_iteration(&mdp, &RewardFunction::zero(1, 2), 1e-12).unwrap();
        assert_eq!(v.value(0), 0.0);
    }

    #[test]
    fn occupancy_examples() {
        let mdp = build_chain(3, 2, 0.0).unwrap();
        let pi = TabularPolicy::uniform(3, 2);
        let d = exact_occupancy(&mdp, &pi, &StartDistribution::StartState).unwrap();
        assert_eq!(d.values, vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let mdp = self_loop(0.9);
        let d = exact_occupancy(&mdp, &TabularPolicy::uniform(1, 1), &StartDistribution::StartState).unwrap();
        assert!((d.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn escape_extremes() {
        let mdp = build_chain(4, 2, 0.9).unwrap();
        assert_eq!(max_escape_probability(&mdp, &[true; 8]).unwrap(), 0.0);
        assert!((max_escape_probability(&mdp, &[false; 8]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mc_value_deterministic_and_small_n() {
        let mdp = build_chain(3, 2, 0.9).unwrap();
        let pi = TabularPolicy::deterministic(&[0, 0, 0], 2).unwrap();
        let r = RewardFunction::from_mdp(&mdp);
        let mut rng = crate::mdp::stream_rng(0, 0);
        let (_, se) = mc_value(&mdp, &pi, &r, 10, &mut rng).unwrap();
        assert!(se < 1e-12, "deterministic returns, se {se}");
        assert!(mc_value(&mdp, &pi, &r, 1, &mut rng).is_err());
    }
}
