//! Benchmark MDPs, their feature maps and state-aggregation tooling.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::mdp::{stream_rng, RewardShift, TabularMdp};

const NORM_TOL: f64 = 1e-12;

/// Dense feature table `phi(s, a)` with `||phi(s, a)||_2 <= 1`.
///
/// Rows are stored row-major by pair index `s * |A| + a`. The nonzero support
/// of every row is cached so that sparse maps (one-hot, aggregation) cost
/// `O(nnz)` per dot product and `O(nnz^2)` per outer product.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    dim: usize,
    num_states: usize,
    num_actions: usize,
    table: Vec<f64>,
    support: Vec<Vec<usize>>,
}

impl FeatureMap {
    pub fn new(num_states: usize, num_actions: usize, dim: usize, table: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(input("feature dimension must be positive"));
        }
        let pairs = num_states * num_actions;
        if table.len() != pairs * dim {
            return Err(Error::Dimension { expected: pairs * dim, got: table.len() });
        }
        let mut support = Vec::with_capacity(pairs);
        for (pair, row) in table.chunks(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(input(format!("non-finite feature at pair {pair}")));
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 + NORM_TOL {
                return Err(input(format!("feature norm {norm} > 1 at pair {pair}")));
            }
            support.push(row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect());
        }
        Ok(FeatureMap { dim, num_states, num_actions, table, support })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.dim;
        &self.table[base..base + self.dim]
    }

    #[inline]
    pub fn support(&self, s: usize, a: usize) -> &[usize] {
        &self.support[s * self.num_actions + a]
    }

    #[inline]
    pub fn dot(&self, s: usize, a: usize, w: &[f64]) -> f64 {
        let phi = self.phi(s, a);
        self.support(s, a).iter().map(|&i| phi[i] * w[i]).sum()
    }

    /// Row-major `(S*A) x d` table.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states != mdp.num_states() || self.num_actions != mdp.num_actions() {
            return Err(input(format!(
                "feature map is {}x{}, MDP is {}x{}",
                self.num_states,
                self.num_actions,
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }

    pub fn to_document(&self) -> FeatureDocument {
        FeatureDocument {
            num_states: self.num_states,
            num_actions: self.num_actions,
            dim: self.dim,
            rows: self.table.chunks(self.dim).map(|r| r.to_vec()).collect(),
        }
    }

    pub fn from_document(doc: &FeatureDocument) -> Result<Self> {
        if doc.rows.iter().any(|r| r.len() != doc.dim) {
            return Err(input("every feature row must have length dim"));
        }
        FeatureMap::new(doc.num_states, doc.num_actions, doc.dim, doc.rows.concat())
    }
}

/// `(S*A) x d` JSON form of a dense feature map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

/// `phi(s, a) = e_{(s, a)}`.
pub fn tabular_onehot_features(mdp: &TabularMdp) -> FeatureMap {
    let n = mdp.num_pairs();
    let mut table = vec![0.0; n * n];
    for i in 0..n {
        table[i * n + i] = 1.0;
    }
    FeatureMap::new(mdp.num_states(), mdp.num_actions(), n, table).expect("one-hot rows have unit norm")
}

/// Bidirectional combination lock.
#[derive(Clone, Debug)]
pub struct Combolock {
    /// Episodic (`gamma = 1`) MDP with rewards shifted into `[0, 1]`.
    pub mdp: TabularMdp,
    /// Binary state encoding (branch, level, lock, terminal flag) concatenated
    /// with a one-hot action, scaled to unit norm.
    pub features: FeatureMap,
    pub horizon: usize,
    /// Lock reached by actions `0..5` is lock 0, `5..10` is lock 1.
    pub high_reward_lock: usize,
    /// `correct_action[lock][h - 1]` for levels `h = 1..H-1`.
    pub correct_action: [Vec<usize>; 2],
}

pub const COMBOLOCK_ACTIONS: usize = 10;

impl Combolock {
    pub fn start(&self) -> usize {
        0
    }

    /// Index of `s^lock_{branch, level}` with branch 0, 1 good and 2 dead.
    pub fn state(&self, lock: usize, level: usize, branch: usize) -> usize {
        combolock_state(self.horizon, lock, level, branch)
    }

    pub fn terminal(&self) -> usize {
        1 + 6 * self.horizon
    }

    /// Undiscounted raw return of the best policy.
    pub fn optimal_return(&self, final_rewards: (f64, f64)) -> f64 {
        final_rewards.0.max(final_rewards.1) - 1.0
    }
}

fn combolock_state(horizon: usize, lock: usize, level: usize, branch: usize) -> usize {
    1 + lock * 3 * horizon + (level - 1) * 3 + branch
}

/// Build the combination lock with `3H` states per lock.
///
/// Raw rewards are `-1/H` on every transition into a good state, `R_l` on
/// leaving the last good state of lock `l`, and 0 otherwise. They are mapped
/// affinely into `[0, 1]`; every episode has exactly `H + 1` non-terminal steps
/// so the raw return is recovered exactly through [`RewardShift`].
pub fn build_combolock(horizon: usize, final_rewards: (f64, f64), seed: u64) -> Result<Combolock> {
    if horizon == 0 {
        return Err(input("combination lock horizon must be at least 1"));
    }
    if !(final_rewards.0 >= 0.0 && final_rewards.1 >= 0.0) {
        return Err(input("final rewards must be non-negative"));
    }
    let h_n = horizon;
    let a_n = COMBOLOCK_ACTIONS;
    let s_n = 6 * h_n + 2;
    let terminal = s_n - 1;
    let mut rng: ChaCha8Rng = stream_rng(seed, 0xC0B0);
    let high_reward_lock = rng.random_range(0..2);
    let lock_reward = |l: usize| {
        if l == high_reward_lock {
            final_rewards.0.max(final_rewards.1)
        } else {
            final_rewards.0.min(final_rewards.1)
        }
    };
    let correct_action: [Vec<usize>; 2] = [
        (1..h_n).map(|_| rng.random_range(0..a_n)).collect(),
        (1..h_n).map(|_| rng.random_range(0..a_n)).collect(),
    ];

    let penalty = -1.0 / h_n as f64;
    let r_max = final_rewards.0.max(final_rewards.1);
    let scale = 1.0 / (r_max - penalty);
    let offset = -penalty * scale;
    let shift = RewardShift { scale, offset, steps: h_n + 1 };

    let mut p = vec![0.0; s_n * a_n * s_n];
    let mut raw = vec![f64::NAN; s_n * a_n];
    let mut set = |s: usize, a: usize, next: &[(usize, f64)], reward: f64| {
        for &(n, prob) in next {
            p[(s * a_n + a) * s_n + n] += prob;
        }
        raw[s * a_n + a] = reward;
    };
    let st = |l, h, i| combolock_state(h_n, l, h, i);

    for a in 0..a_n {
        let lock = if a < a_n / 2 { 0 } else { 1 };
        set(0, a, &[(st(lock, 1, 0), 0.5), (st(lock, 1, 1), 0.5)], penalty);
    }
    for lock in 0..2 {
        for level in 1..=h_n {
            for branch in 0..3 {
                let s = st(lock, level, branch);
                for a in 0..a_n {
                    if level == h_n {
                        let r = if branch < 2 { lock_reward(lock) } else { 0.0 };
                        set(s, a, &[(terminal, 1.0)], r);
                    } else if branch < 2 && a == correct_action[lock][level - 1] {
                        set(s, a, &[(st(lock, level + 1, 0), 0.5), (st(lock, level + 1, 1), 0.5)], penalty);
                    } else {
                        set(s, a, &[(st(lock, level + 1, 2), 1.0)], 0.0);
                    }
                }
            }
        }
    }
    for a in 0..a_n {
        set(terminal, a, &[(terminal, 1.0)], 0.0);
    }

    // the terminal state keeps zero reward so it stays absorbing
    let reward: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(pair, &r)| if pair / a_n == terminal { 0.0 } else { (scale * r + offset).clamp(0.0, 1.0) })
        .collect();
    let mdp = TabularMdp::new(s_n, a_n, p, reward, 0, 1.0)?.with_reward_shift(shift);

    // binary encoding: [branch(3) | level(H) | lock(2) | terminal(1) | action(10)]
    let dim = 3 + h_n + 2 + 1 + a_n;
    let mut table = vec![0.0; s_n * a_n * dim];
    for s in 0..s_n {
        let mut enc = vec![0.0; 3 + h_n + 3];
        if s == terminal {
            enc[3 + h_n + 2] = 1.0;
        } else if s > 0 {
            let k = s - 1;
            let lock = k / (3 * h_n);
            let level = (k % (3 * h_n)) / 3;
            let branch = k % 3;
            enc[branch] = 1.0;
            enc[3 + level] = 1.0;
            enc[3 + h_n + lock] = 1.0;
        }
        for a in 0..a_n {
            let row = &mut table[(s * a_n + a) * dim..(s * a_n + a + 1) * dim];
            row[..enc.len()].copy_from_slice(&enc);
            row[enc.len() + a] = 1.0;
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let features = FeatureMap::new(s_n, a_n, dim, table)?;
    Ok(Combolock { mdp, features, horizon: h_n, high_reward_lock, correct_action })
}

/// The two-action example with a rewarding left path and a depth-`H` binary
/// tree on the right whose features live in the orthogonal complement of
/// `span(e1, e2, e3)`.
#[derive(Clone, Debug)]
pub struct BinaryTree {
    /// Episodic (`gamma = 1`) MDP. State 0 is `s0`, state 1 is `s1`, the tree
    /// root is state 2 and nodes are stored in breadth-first order.
    pub mdp: TabularMdp,
    pub features: FeatureMap,
    pub depth: usize,
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

impl BinaryTree {
    pub fn tree_states(&self) -> std::ops::Range<usize> {
        2..self.mdp.num_states()
    }
}

/// Build the tree with seeded unit-norm subtree features drawn uniformly from
/// the unit sphere of the complement of `span(e1, e2, e3)`.
pub fn build_binary_tree(depth: usize, dim: usize, subtree_feature_seed: u64) -> Result<BinaryTree> {
    if dim < 4 {
        return Err(input(format!("feature dimension {dim} < 4 leaves no room for subtree features")));
    }
    let mut rng = stream_rng(subtree_feature_seed, 0x7EE);
    build_binary_tree_with(depth, dim, |_, _| {
        let mut v = vec![0.0; dim];
        loop {
            for x in v.iter_mut().skip(3) {
                *x = rng.sample(StandardNormal);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                return v.clone();
            }
        }
    })
}

/// Same MDP with caller-supplied subtree features `f(state, action)`; every
/// returned vector must have its first three coordinates equal to zero.
pub fn build_binary_tree_with<F>(depth: usize, dim: usize, mut subtree_feature: F) -> Result<BinaryTree>
where
    F: FnMut(usize, usize) -> Vec<f64>,
{
    if depth == 0 {
        return Err(input("tree depth must be at least 1"));
    }
    if dim < 4 {
        return Err(input(format!("feature dimension {dim} < 4 leaves no room for subtree features")));
    }
    let nodes = (1usize << (depth + 1)) - 1;
    let s_n = 2 + nodes;
    let a_n = 2;
    let mut p = vec![0.0; s_n * a_n * s_n];
    let mut r = vec![0.0; s_n * a_n];
    let idx = |s: usize, a: usize, n: usize| (s * a_n + a) * s_n + n;
    p[idx(0, LEFT, 1)] = 1.0;
    r[LEFT] = 0.5;
    p[idx(0, RIGHT, 2)] = 1.0;
    p[idx(1, LEFT, 1)] = 1.0;
    p[idx(1, RIGHT, 1)] = 1.0;
    for node in 0..nodes {
        let s = 2 + node;
        let (left, right) = (2 * node + 1, 2 * node + 2);
        if left < nodes {
            p[idx(s, LEFT, 2 + left)] = 1.0;
            p[idx(s, RIGHT, 2 + right)] = 1.0;
        } else {
            p[idx(s, LEFT, s)] = 1.0;
            p[idx(s, RIGHT, s)] = 1.0;
        }
    }
    let mdp = TabularMdp::new(s_n, a_n, p, r, 0, 1.0)?;

    let mut table = vec![0.0; s_n * a_n * dim];
    table[0] = 1.0; // phi(s0, L) = e1
    table[dim + 1] = 1.0; // phi(s0, R) = e2
    table[2 * dim + 2] = 1.0; // phi(s1, L) = e3
    table[3 * dim + 2] = 1.0; // phi(s1, R) = e3
    for s in 2..s_n {
        for a in 0..a_n {
            let v = subtree_feature(s, a);
            if v.len() != dim {
                return Err(Error::Dimension { expected: dim, got: v.len() });
            }
            if v[..3].iter().any(|&x| x != 0.0) {
                return Err(input(format!("subtree feature at ({s}, {a}) touches the first three coordinates")));
            }
            table[(s * a_n + a) * dim..(s * a_n + a + 1) * dim].copy_from_slice(&v);
        }
    }
    let features = FeatureMap::new(s_n, a_n, dim, table)?;
    Ok(BinaryTree { mdp, features, depth })
}

/// Parameters of a linear MDP: `P(.|s,a) = sum_k phi_k(s,a) mu_k(.)` and
/// `r(s,a) = theta . phi(s,a)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearMdpSpec {
    /// `mu[k]` is a distribution over next states.
    pub mu: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    /// `||theta||_2`.
    pub omega: f64,
    /// `sum_s' ||mu(s')||_2`, an upper bound on `||v^T mu||` for `|v| <= 1`.
    pub xi: f64,
}

#[derive(Clone, Debug)]
pub struct LinearMdp {
    pub mdp: TabularMdp,
    pub features: FeatureMap,
    pub spec: LinearMdpSpec,
}

/// Random linear MDP with simplex-valued features.
///
/// Features are sparse points of the probability simplex (so `||phi||_2 <= 1`
/// and every transition row is an exact mixture of the `d` base
/// distributions). The first `d` pairs of state 0 and its successors get the
/// simplex vertices so the feature set spans `R^d`.
pub fn build_random_linear_mdp(
    num_states: usize,
    num_actions: usize,
    dim: usize,
    gamma: f64,
    seed: u64,
) -> Result<LinearMdp> {
    if dim == 0 || num_states == 0 || num_actions == 0 {
        return Err(input("linear MDP needs positive S, A and d"));
    }
    if dim > num_states * num_actions {
        return Err(input(format!("d = {dim} exceeds S*A = {}", num_states * num_actions)));
    }
    let mut rng = stream_rng(seed, 0x11DE);
    let pairs = num_states * num_actions;
    let mut table = vec![0.0; pairs * dim];
    let mut order: Vec<usize> = (0..pairs).collect();
    order.shuffle(&mut rng);
    for (rank, &pair) in order.iter().enumerate() {
        let row = &mut table[pair * dim..(pair + 1) * dim];
        if rank < dim {
            row[rank] = 1.0;
        } else {
            // mixture of two or three vertices
            let k = rng.random_range(2..=3.min(dim).max(2)).min(dim);
            let mut w = vec![0.0; dim];
            for _ in 0..k {
                w[rng.random_range(0..dim)] += rng.random::<f64>() + 0.05;
            }
            let total: f64 = w.iter().sum();
            row.iter_mut().zip(&w).for_each(|(x, wi)| *x = wi / total);
        }
    }
    let mu: Vec<Vec<f64>> = (0..dim)
        .map(|_| {
            // sparse random next-state distribution
            let support = 1 + rng.random_range(0..3.min(num_states));
            let mut m = vec![0.0; num_states];
            for _ in 0..support {
                m[rng.random_range(0..num_states)] += rng.random::<f64>() + 0.1;
            }
            let total: f64 = m.iter().sum();
            m.iter_mut().for_each(|x| *x /= total);
            m
        })
        .collect();
    let theta: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();

    let mut p = vec![0.0; pairs * num_states];
    let mut r = vec![0.0; pairs];
    for pair in 0..pairs {
        let phi = &table[pair * dim..(pair + 1) * dim];
        for (k, &w) in phi.iter().enumerate() {
            if w != 0.0 {
                for (next, &m) in mu[k].iter().enumerate() {
                    p[pair * num_states + next] += w * m;
                }
            }
        }
        r[pair] = phi.iter().zip(&theta).map(|(a, b)| a * b).sum();
    }
    let mdp = TabularMdp::new(num_states, num_actions, p, r, 0, gamma)
        .map_err(|e| Error::Construction(format!("linear MDP invalid: {e}")))?;
    let features = FeatureMap::new(num_states, num_actions, dim, table)?;
    let omega = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    let xi = (0..num_states)
        .map(|s| mu.iter().map(|m| m[s] * m[s]).sum::<f64>().sqrt())
        .sum();
    Ok(LinearMdp { mdp, features, spec: LinearMdpSpec { mu, theta, omega, xi } })
}

/// Abstract classes of a state-action aggregation and their misspecification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregationSpec {
    /// Class of every pair, indexed `s * |A| + a`.
    pub map: Vec<usize>,
    pub num_classes: usize,
    /// Largest disagreement (`l1` transition distance or reward gap) between
    /// two pairs in the same class.
    pub misspec: Vec<f64>,
}

impl AggregationSpec {
    pub fn class_of(&self, pair: usize) -> usize {
        self.map[pair]
    }
}

/// Indicator features `phi(s, a) = e_{z(s, a)}` for a total aggregation map.
pub fn build_aggregated_features(mdp: &TabularMdp, map: &[usize]) -> Result<(FeatureMap, AggregationSpec)> {
    let pairs = mdp.num_pairs();
    if map.len() != pairs {
        return Err(Error::Dimension { expected: pairs, got: map.len() });
    }
    let num_classes = map.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (pair, &z) in map.iter().enumerate() {
        members[z].push(pair);
    }
    let a_n = mdp.num_actions();
    let misspec = members
        .iter()
        .map(|group| {
            let mut worst: f64 = 0.0;
            for (i, &p) in group.iter().enumerate() {
                for &q in &group[i + 1..] {
                    let (ps, pa, qs, qa) = (p / a_n, p % a_n, q / a_n, q % a_n);
                    let l1: f64 = mdp
                        .transition_row(ps, pa)
                        .iter()
                        .zip(mdp.transition_row(qs, qa))
                        .map(|(x, y)| (x - y).abs())
                        .sum();
                    let dr = (mdp.reward(ps, pa) - mdp.reward(qs, qa)).abs();
                    worst = worst.max(l1).max(dr);
                }
            }
            worst
        })
        .collect();
    let mut table = vec![0.0; pairs * num_classes];
    for (pair, &z) in map.iter().enumerate() {
        table[pair * num_classes + z] = 1.0;
    }
    let features = FeatureMap::new(mdp.num_states(), a_n, num_classes.max(1), if num_classes == 0 {
        vec![0.0; pairs]
    } else {
        table
    })?;
    Ok((features, AggregationSpec { map: map.to_vec(), num_classes, misspec }))
}

/// An MDP built around a small abstract model: every pair of class `z`
/// shares the class's next-state distribution and reward up to a perturbation
/// of size `noise`.
#[derive(Clone, Debug)]
pub struct AggregatedInstance {
    pub mdp: TabularMdp,
    pub features: FeatureMap,
    pub spec: AggregationSpec,
}

pub fn build_aggregated_instance(
    num_states: usize,
    num_actions: usize,
    num_classes: usize,
    noise: f64,
    gamma: f64,
    seed: u64,
) -> Result<AggregatedInstance> {
    let pairs = num_states * num_actions;
    if num_classes == 0 || num_classes > pairs {
        return Err(input(format!("need 1 <= |Z| <= S*A, got {num_classes}")));
    }
    if !(0.0..=0.5).contains(&noise) {
        return Err(input(format!("noise {noise} outside [0, 0.5]")));
    }
    let mut rng = stream_rng(seed, 0xA66);
    let mut map: Vec<usize> = (0..pairs).map(|p| p % num_classes).collect();
    map.shuffle(&mut rng);
    let class_next: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let mut m = vec![0.0; num_states];
            for _ in 0..2 {
                m[rng.random_range(0..num_states)] += rng.random::<f64>() + 0.2;
            }
            let t: f64 = m.iter().sum();
            m.iter_mut().for_each(|x| *x /= t);
            m
        })
        .collect();
    let class_reward: Vec<f64> = (0..num_classes)
        .map(|_| if rng.random::<f64>() < 0.3 { 0.9 * rng.random::<f64>() + 0.05 } else { 0.05 * rng.random::<f64>() })
        .collect();
    let mut p = vec![0.0; pairs * num_states];
    let mut r = vec![0.0; pairs];
    for pair in 0..pairs {
        let z = map[pair];
        let mut jitter: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>()).collect();
        let t: f64 = jitter.iter().sum();
        jitter.iter_mut().for_each(|x| *x /= t);
        for s in 0..num_states {
            p[pair * num_states + s] = (1.0 - noise) * class_next[z][s] + noise * jitter[s];
        }
        renormalize(&mut p[pair * num_states..(pair + 1) * num_states]);
        r[pair] = (class_reward[z] + noise * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0);
    }
    let mdp = TabularMdp::new(num_states, num_actions, p, r, 0, gamma)?;
    let (features, spec) = build_aggregated_features(&mdp, &map)?;
    Ok(AggregatedInstance { mdp, features, spec })
}

/// Deterministic chain: action 0 moves right (the last state self-loops),
/// every other action resets to state 0. Reward 1 only for action 0 at the
/// last state.
pub fn build_chain(length: usize, num_actions: usize, gamma: f64) -> Result<TabularMdp> {
    if length == 0 || num_actions < 2 {
        return Err(input("chain needs at least one state and two actions"));
    }
    let mut p = vec![0.0; length * num_actions * length];
    let mut r = vec![0.0; length * num_actions];
    for s in 0..length {
        for a in 0..num_actions {
            let next = if a == 0 { (s + 1).min(length - 1) } else { 0 };
            p[(s * num_actions + a) * length + next] = 1.0;
        }
    }
    r[(length - 1) * num_actions] = 1.0;
    TabularMdp::new(length, num_actions, p, r, 0, gamma)
}

/// Random tabular MDP where each pair moves to `branching` random successors.
pub fn build_random_tabular(
    num_states: usize,
    num_actions: usize,
    branching: usize,
    gamma: f64,
    seed: u64,
) -> Result<TabularMdp> {
    if branching == 0 {
        return Err(input("branching must be positive"));
    }
    let mut rng = stream_rng(seed, 0x7AB);
    let pairs = num_states * num_actions;
    let mut p = vec![0.0; pairs * num_states];
    for pair in 0..pairs {
        let row = &mut p[pair * num_states..(pair + 1) * num_states];
        for _ in 0..branching {
            row[rng.random_range(0..num_states)] += rng.random::<f64>() + 0.1;
        }
        renormalize(row);
    }
    let r = (0..pairs).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(num_states, num_actions, p, r, 0, gamma)
}

/// One-state bandit with the given mean rewards.
pub fn build_bandit(rewards: &[f64], gamma: f64) -> Result<TabularMdp> {
    let a_n = rewards.len();
    TabularMdp::new(1, a_n, vec![1.0; a_n], rewards.to_vec(), 0, gamma)
}

fn renormalize(row: &mut [f64]) {
    let t: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= t);
    // push rounding error onto the largest entry so the row sums to 1
    let err = 1.0 - row.iter().sum::<f64>();
    if let Some(m) = row.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *m += err;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norms_ok(f: &FeatureMap) -> bool {
        (0..f.num_states())
            .all(|s| (0..f.num_actions()).all(|a| f.phi(s, a).iter().map(|x| x * x).sum::<f64>().sqrt() <= 1.0 + 1e-12))
    }

    #[test]
    fn onehot_is_orthonormal() {
        let mdp = build_random_tabular(4, 3, 2, 0.9, 1).unwrap();
        let f = tabular_onehot_features(&mdp);
        assert_eq!(f.dim(), 12);
        for p in 0..12 {
            for q in 0..12 {
                let (ps, pa, qs, qa) = (p / 3, p % 3, q / 3, q % 3);
                let dot: f64 = f.phi(ps, pa).iter().zip(f.phi(qs, qa)).map(|(x, y)| x * y).sum();
                assert_eq!(dot, if p == q { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn combolock_structure() {
        let lock = build_combolock(2, (5.0, 2.0), 0).unwrap();
        let mdp = &lock.mdp;
        assert_eq!(mdp.num_states(), 1 + 2 * 3 * 2 + 1);
        assert_eq!(mdp.num_actions(), 10);
        assert!(norms_ok(&lock.features));
        // dead chain is deterministic with zero raw reward
        let shift = mdp.reward_shift().unwrap();
        for l in 0..2 {
            let dead = lock.state(l, 1, 2);
            for a in 0..10 {
                assert_eq!(mdp.successors(dead, a), &[(lock.state(l, 2, 2), 1.0)]);
                assert!(((mdp.reward(dead, a) - shift.offset) / shift.scale).abs() < 1e-12);
            }
        }
        // exactly one action per good state below the last level stays on the good chain
        for l in 0..2 {
            for b in 0..2 {
                let s = lock.state(l, 1, b);
                let good = (0..10).filter(|&a| mdp.successors(s, a).len() == 2).count();
                assert_eq!(good, 1);
            }
        }
        assert_eq!(mdp.episode_bound(), Some(3));
    }

    #[test]
    fn combolock_rejects_zero_horizon() {
        assert!(build_combolock(0, (5.0, 2.0), 0).is_err());
    }

    #[test]
    fn binary_tree_features() {
        let tree = build_binary_tree(3, 7, 5).unwrap();
        let f = &tree.features;
        assert_eq!(f.phi(0, LEFT)[0], 1.0);
        assert_eq!(f.phi(0, RIGHT)[1], 1.0);
        assert_eq!(f.phi(1, LEFT), f.phi(1, RIGHT));
        assert_eq!(f.phi(1, LEFT)[2], 1.0);
        for s in tree.tree_states() {
            for a in 0..2 {
                assert_eq!(&f.phi(s, a)[..3], &[0.0, 0.0, 0.0]);
                let n: f64 = f.phi(s, a).iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(tree.mdp.reward(0, LEFT), 0.5);
        assert!(build_binary_tree(3, 3, 0).is_err());
    }

    #[test]
    fn linear_mdp_construction_is_exact() {
        let lin = build_random_linear_mdp(10, 3, 4, 0.9, 7).unwrap();
        for s in 0..10 {
            for a in 0..3 {
                let phi = lin.features.phi(s, a);
                let r: f64 = phi.iter().zip(&lin.spec.theta).map(|(x, y)| x * y).sum();
                assert_eq!(lin.mdp.reward(s, a), r);
                let sum: f64 = lin.mdp.transition_row(s, a).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        assert!(norms_ok(&lin.features));
        assert!(build_random_linear_mdp(2, 2, 5, 0.9, 0).is_err());
    }

    #[test]
    fn identity_aggregation_has_no_misspec() {
        let mdp = build_random_tabular(5, 2, 3, 0.9, 3).unwrap();
        let map: Vec<usize> = (0..10).collect();
        let (f, spec) = build_aggregated_features(&mdp, &map).unwrap();
        assert_eq!(f.dim(), 10);
        assert!(spec.misspec.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn merged_identical_states_have_zero_misspec() {
        // states 0 and 1 identical, both move to 2
        let p = vec![
            0.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, //
            0.0, 0.0, 1.0,
        ];
        let mdp = TabularMdp::new(3, 1, p, vec![0.3, 0.3, 0.0], 0, 0.9).unwrap();
        let (_, spec) = build_aggregated_features(&mdp, &[0, 0, 1]).unwrap();
        assert_eq!(spec.misspec, vec![0.0, 0.0]);
    }

    #[test]
    fn feature_document_round_trip() {
        let lin = build_random_linear_mdp(4, 2, 3, 0.9, 1).unwrap();
        let doc = lin.features.to_document();
        assert_eq!(doc.rows.len(), 8);
        let back = FeatureMap::from_document(&doc).unwrap();
        assert_eq!(back.table(), lin.features.table());
    }
}
