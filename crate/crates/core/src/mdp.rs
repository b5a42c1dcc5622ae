//! Finite MDPs, tabular policies, reward tables and the Monte-Carlo samplers
//! used by every learning routine in the crate.
//!
//! Two execution modes exist. With `gamma < 1` every sampler terminates
//! geometrically (probability `1 - gamma` after each step) and is truncated at
//! a horizon cap. With `gamma == 1` the MDP must carry an episodic certificate
//! (every trajectory is absorbed in a zero-reward terminal state within a known
//! number of steps) and samplers run until absorption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, input, Error, Result};

/// Default truncation mass for geometric rollouts.
pub const DEFAULT_TAIL: f64 = 1e-4;

const ROW_TOL: f64 = 1e-12;

/// Independent generator for `(master_seed, stream)`. Every worker, episode
/// and iteration derives its own stream so results never depend on scheduling.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Affine map applied to raw environment rewards so that they lie in `[0, 1]`.
///
/// `internal = scale * raw + offset` on every non-terminal step. Only valid
/// for MDPs where every episode has exactly `steps` non-terminal steps, which
/// makes the shift a constant per start state and preserves every argmax.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardShift {
    pub scale: f64,
    pub offset: f64,
    pub steps: usize,
}

impl RewardShift {
    /// Raw undiscounted return of a full episode from its shifted value.
    pub fn raw_episode_return(&self, shifted: f64) -> f64 {
        (shifted - self.offset * self.steps as f64) / self.scale
    }

    /// Raw discounted value from the start state given the shifted value.
    pub fn raw_discounted_value(&self, shifted: f64, gamma: f64) -> f64 {
        let discount_mass: f64 = (0..self.steps).map(|t| gamma.powi(t as i32)).sum();
        (shifted - self.offset * discount_mass) / self.scale
    }
}

#[derive(Clone, Debug)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    start_state: usize,
    gamma: f64,
    successors: Vec<Vec<(usize, f64)>>,
    terminal: Vec<bool>,
    episode_bound: Option<usize>,
    reward_shift: Option<RewardShift>,
}

impl TabularMdp {
    /// `transition` is row-major `[s][a][s']`, `reward` is `[s][a]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        start_state: usize,
        gamma: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(input("MDP needs at least one state and one action"));
        }
        let pairs = num_states * num_actions;
        if transition.len() != pairs * num_states {
            return Err(Error::Dimension { expected: pairs * num_states, got: transition.len() });
        }
        if reward.len() != pairs {
            return Err(Error::Dimension { expected: pairs, got: reward.len() });
        }
        if start_state >= num_states {
            return Err(input(format!("start state {start_state} out of range")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(input(format!("discount {gamma} outside [0, 1]")));
        }
        let mut successors = Vec::with_capacity(pairs);
        for (pair, row) in transition.chunks(num_states).enumerate() {
            let mut sum = 0.0;
            let mut succ = Vec::new();
            for (next, &p) in row.iter().enumerate() {
                if !(p >= 0.0) {
                    return Err(input(format!("negative or NaN transition probability at pair {pair}")));
                }
                if p > 0.0 {
                    succ.push((next, p));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(input(format!("transition row for pair {pair} sums to {sum}")));
            }
            successors.push(succ);
        }
        for (pair, &r) in reward.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(input(format!("reward {r} at pair {pair} outside [0, 1]")));
            }
        }
        let terminal = (0..num_states)
            .map(|s| {
                (0..num_actions).all(|a| {
                    let idx = s * num_actions + a;
                    reward[idx] == 0.0 && successors[idx].len() == 1 && successors[idx][0].0 == s
                })
            })
            .collect();
        let mut mdp = TabularMdp {
            num_states,
            num_actions,
            transition,
            reward,
            start_state,
            gamma,
            successors,
            terminal,
            episode_bound: None,
            reward_shift: None,
        };
        mdp.episode_bound = mdp.layered_certificate();
        if gamma == 1.0 && mdp.episode_bound.is_none() {
            return Err(config(
                "gamma = 1 requires every trajectory to be absorbed in a zero-reward terminal state",
            ));
        }
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start_state(&self) -> usize {
        self.start_state
    }

    #[inline]
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.num_states;
        &self.transition[base..base + self.num_states]
    }

    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.num_actions + a]
    }

    /// A state whose every action self-loops with zero reward.
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Maximum number of non-terminal steps of any trajectory, if every
    /// trajectory is absorbed.
    pub fn episode_bound(&self) -> Option<usize> {
        self.episode_bound
    }

    pub fn is_episodic(&self) -> bool {
        self.gamma == 1.0
    }

    pub fn reward_shift(&self) -> Option<RewardShift> {
        self.reward_shift
    }

    pub fn with_reward_shift(mut self, shift: RewardShift) -> Self {
        self.reward_shift = Some(shift);
        self
    }

    /// Same dynamics and rewards under a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut mdp = TabularMdp::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.start_state,
            gamma,
        )?;
        mdp.reward_shift = self.reward_shift;
        Ok(mdp)
    }

    pub fn with_start(&self, start_state: usize) -> Result<Self> {
        if start_state >= self.num_states {
            return Err(input(format!("start state {start_state} out of range")));
        }
        let mut mdp = self.clone();
        mdp.start_state = start_state;
        Ok(mdp)
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(input(format!("state {s} out of range (|S| = {})", self.num_states)));
        }
        Ok(())
    }

    pub fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.num_actions {
            return Err(input(format!("action {a} out of range (|A| = {})", self.num_actions)));
        }
        Ok(())
    }

    /// Longest path (in steps) through non-terminal states, or `None` when the
    /// non-terminal part of the transition graph has a cycle.
    fn layered_certificate(&self) -> Option<usize> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark = vec![0u8; self.num_states];
        let mut longest = vec![0usize; self.num_states];
        for root in 0..self.num_states {
            if mark[root] != 0 || self.terminal[root] {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
            mark[root] = 1;
            while let Some(&mut (s, ref mut cursor)) = stack.last_mut() {
                let edges: Vec<usize> = (0..self.num_actions)
                    .flat_map(|a| self.successors(s, a).iter().map(|&(n, _)| n))
                    .collect();
                if *cursor < edges.len() {
                    let next = edges[*cursor];
                    *cursor += 1;
                    if self.terminal[next] {
                        continue;
                    }
                    match mark[next] {
                        0 => {
                            mark[next] = 1;
                            stack.push((next, 0));
                        }
                        1 => return None,
                        _ => {}
                    }
                } else {
                    let best = edges
                        .iter()
                        .filter(|&&n| !self.terminal[n])
                        .map(|&n| longest[n])
                        .max()
                        .unwrap_or(0);
                    longest[s] = best + 1;
                    mark[s] = 2;
                    stack.pop();
                }
            }
        }
        if self.terminal[self.start_state] {
            return Some(0);
        }
        Some(longest.into_iter().max().unwrap_or(0))
    }

    /// Number of steps after which a sampler is truncated. For discounted
    /// MDPs this is `ceil(ln(1/tail) / (1 - gamma))`, which bounds the
    /// un-terminated mass by `tail`.
    pub fn horizon_cap(&self, tail: f64) -> Result<usize> {
        if self.gamma < 1.0 {
            if !(tail > 0.0 && tail < 1.0) {
                return Err(input(format!("tail mass {tail} outside (0, 1)")));
            }
            Ok(((1.0 / tail).ln() / (1.0 - self.gamma)).ceil().max(1.0) as usize)
        } else {
            self.episode_bound
                .map(|b| b.max(1))
                .ok_or_else(|| config("undiscounted sampling needs a horizon cap"))
        }
    }

    fn resolve_cap(&self, cap: Option<usize>) -> Result<usize> {
        match cap {
            Some(0) => Err(input("horizon cap must be at least 1")),
            Some(c) => Ok(c),
            None => self.horizon_cap(DEFAULT_TAIL),
        }
    }

    #[inline]
    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let succ = &self.successors[s * self.num_actions + a];
        if succ.len() == 1 {
            return succ[0].0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(next, p) in succ {
            acc += p;
            if u < acc {
                return next;
            }
        }
        succ[succ.len() - 1].0
    }

    pub fn to_document(&self) -> MdpDocument {
        let s_n = self.num_states;
        let a_n = self.num_actions;
        MdpDocument {
            num_states: s_n,
            num_actions: a_n,
            gamma: self.gamma,
            start: self.start_state,
            transition: (0..s_n)
                .map(|s| (0..a_n).map(|a| self.transition_row(s, a).to_vec()).collect())
                .collect(),
            reward: (0..s_n)
                .map(|s| (0..a_n).map(|a| self.reward(s, a)).collect())
                .collect(),
            reward_shift: self.reward_shift,
        }
    }

    pub fn from_document(doc: &MdpDocument) -> Result<Self> {
        let mut transition = Vec::with_capacity(doc.num_states * doc.num_actions * doc.num_states);
        let mut reward = Vec::with_capacity(doc.num_states * doc.num_actions);
        if doc.transition.len() != doc.num_states || doc.reward.len() != doc.num_states {
            return Err(input("P and r must have one entry per state"));
        }
        for s in 0..doc.num_states {
            if doc.transition[s].len() != doc.num_actions || doc.reward[s].len() != doc.num_actions {
                return Err(input(format!("state {s}: expected {} actions", doc.num_actions)));
            }
            for a in 0..doc.num_actions {
                if doc.transition[s][a].len() != doc.num_states {
                    return Err(input(format!("P[{s}][{a}] has wrong length")));
                }
                transition.extend_from_slice(&doc.transition[s][a]);
                reward.push(doc.reward[s][a]);
            }
        }
        let mdp = TabularMdp::new(doc.num_states, doc.num_actions, transition, reward, doc.start, doc.gamma)?;
        Ok(match doc.reward_shift {
            Some(shift) => mdp.with_reward_shift(shift),
            None => mdp,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// JSON form of a [`TabularMdp`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub start: usize,
    #[serde(rename = "P")]
    pub transition: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "r")]
    pub reward: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_shift: Option<RewardShift>,
}

/// A stationary stochastic policy over a finite state space.
pub trait Policy {
    fn num_actions(&self) -> usize;

    fn action_probs(&self, state: usize) -> &[f64];

    #[inline]
    fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize
    where
        Self: Sized,
    {
        sample_index(self.action_probs(state), rng)
    }
}

#[inline]
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last action with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[inline]
fn draw<P: Policy + ?Sized, R: Rng + ?Sized>(policy: &P, s: usize, rng: &mut R) -> usize {
    sample_index(policy.action_probs(s), rng)
}

/// Explicit probability table `pi[s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    num_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        TabularPolicy { num_actions, probs: vec![1.0 / num_actions as f64; num_states * num_actions] }
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(input(format!("action {a} out of range at state {s}")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Ok(TabularPolicy { num_actions, probs })
    }

    pub fn from_table(num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || probs.len() % num_actions != 0 {
            return Err(input("policy table length must be a multiple of |A|"));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(input(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(TabularPolicy { num_actions, probs })
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.num_actions
    }

    pub fn table(&self) -> &[f64] {
        &self.probs
    }
}

impl Policy for TabularPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn action_probs(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }
}

/// Materialize any policy over `num_states` states into a table.
pub fn policy_table<P: Policy + ?Sized>(policy: &P, num_states: usize) -> TabularPolicy {
    let a_n = policy.num_actions();
    let mut probs = Vec::with_capacity(num_states * a_n);
    for s in 0..num_states {
        probs.extend_from_slice(policy.action_probs(s));
    }
    TabularPolicy { num_actions: a_n, probs }
}

/// Tabulated reward `(s, a) -> value >= 0`, typically the environment reward
/// plus an exploration bonus.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardFunction {
    num_actions: usize,
    table: Vec<f64>,
}

impl RewardFunction {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        RewardFunction { num_actions: mdp.num_actions(), table: mdp.reward_table().to_vec() }
    }

    /// Reward-free override, `r = 0` everywhere.
    pub fn zero(num_states: usize, num_actions: usize) -> Self {
        RewardFunction { num_actions, table: vec![0.0; num_states * num_actions] }
    }

    pub fn from_table(num_actions: usize, table: Vec<f64>) -> Result<Self> {
        if num_actions == 0 || table.len() % num_actions != 0 {
            return Err(input("reward table length must be a multiple of |A|"));
        }
        if let Some(v) = table.iter().find(|v| !(**v >= 0.0)) {
            return Err(input(format!("reward value {v} is negative")));
        }
        Ok(RewardFunction { num_actions, table })
    }

    /// Pointwise sum with a bonus table of the same shape.
    pub fn plus(&self, bonus: &[f64]) -> Result<Self> {
        if bonus.len() != self.table.len() {
            return Err(Error::Dimension { expected: self.table.len(), got: bonus.len() });
        }
        let table = self.table.iter().zip(bonus).map(|(r, b)| r + b).collect();
        RewardFunction::from_table(self.num_actions, table)
    }

    #[inline]
    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.num_actions + a]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(|&v| v == 0.0)
    }
}

/// Where a sampler starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartDistribution {
    /// The MDP's start state, first action from the policy.
    StartState,
    /// A distribution over states; the first action comes from the policy.
    States(Vec<f64>),
    /// A distribution over state-action pairs, indexed `s * |A| + a`.
    Pairs(Vec<f64>),
}

impl StartDistribution {
    fn draw<P: Policy + ?Sized, R: Rng + ?Sized>(
        &self,
        mdp: &TabularMdp,
        policy: &P,
        rng: &mut R,
    ) -> Result<(usize, usize)> {
        match self {
            StartDistribution::StartState => {
                let s = mdp.start_state();
                Ok((s, draw(policy, s, rng)))
            }
            StartDistribution::States(dist) => {
                if dist.len() != mdp.num_states() {
                    return Err(Error::Dimension { expected: mdp.num_states(), got: dist.len() });
                }
                let s = sample_index(dist, rng);
                Ok((s, draw(policy, s, rng)))
            }
            StartDistribution::Pairs(dist) => {
                if dist.len() != mdp.num_pairs() {
                    return Err(Error::Dimension { expected: mdp.num_pairs(), got: dist.len() });
                }
                let idx = sample_index(dist, rng);
                Ok((idx / mdp.num_actions(), idx % mdp.num_actions()))
            }
        }
    }
}

fn check_policy<P: Policy + ?Sized>(mdp: &TabularMdp, policy: &P) -> Result<()> {
    if policy.num_actions() != mdp.num_actions() {
        return Err(input(format!(
            "policy has {} actions, MDP has {}",
            policy.num_actions(),
            mdp.num_actions()
        )));
    }
    Ok(())
}

/// A draw from the discounted state-action occupancy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampledPair {
    pub state: usize,
    pub action: usize,
    /// Step at which termination fired.
    pub depth: usize,
    /// The rollout hit the horizon cap (or absorption in episodic mode)
    /// before geometric termination.
    pub capped: bool,
}

/// Draw `(s, a)` from `d^pi_init` by executing `policy` and terminating with
/// probability `1 - gamma` after each step.
pub fn sample_discounted_pair<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    init: &StartDistribution,
    rng: &mut R,
    horizon_cap: Option<usize>,
) -> Result<SampledPair>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    check_policy(mdp, policy)?;
    let cap = mdp.resolve_cap(horizon_cap)?;
    let (mut s, mut a) = init.draw(mdp, policy, rng)?;
    let gamma = mdp.gamma();
    let mut depth = 0;
    loop {
        if rng.random::<f64>() >= gamma {
            return Ok(SampledPair { state: s, action: a, depth, capped: false });
        }
        if depth + 1 >= cap {
            return Ok(SampledPair { state: s, action: a, depth, capped: true });
        }
        let next = mdp.sample_next(s, a, rng);
        if mdp.is_episodic() && mdp.is_terminal(next) {
            return Ok(SampledPair { state: s, action: a, depth, capped: true });
        }
        s = next;
        a = draw(policy, s, rng);
        depth += 1;
    }
}

/// Unbiased single-rollout estimate of `Q^pi(s, a; reward)`: the undiscounted
/// sum of rewards up to the geometric stopping time.
pub fn estimate_q<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    reward: &RewardFunction,
    s: usize,
    a: usize,
    rng: &mut R,
    horizon_cap: Option<usize>,
) -> Result<f64>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    check_policy(mdp, policy)?;
    mdp.check_state(s)?;
    mdp.check_action(a)?;
    let cap = mdp.resolve_cap(horizon_cap)?;
    Ok(q_rollout(mdp, policy, reward, s, a, rng, cap))
}

/// Unchecked inner loop of [`estimate_q`].
#[inline]
pub(crate) fn q_rollout<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    reward: &RewardFunction,
    mut s: usize,
    mut a: usize,
    rng: &mut R,
    cap: usize,
) -> f64
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let gamma = mdp.gamma();
    let episodic = mdp.is_episodic();
    let mut total = 0.0;
    for step in 0..cap {
        total += reward.value(s, a);
        if !episodic && rng.random::<f64>() >= gamma {
            break;
        }
        if step + 1 == cap {
            break;
        }
        let next = mdp.sample_next(s, a, rng);
        if episodic && mdp.is_terminal(next) {
            break;
        }
        s = next;
        a = draw(policy, s, rng);
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Absorbed,
    Geometric,
    HorizonCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminated: Termination,
}

impl Trajectory {
    pub fn undiscounted_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut g = 1.0;
        let mut total = 0.0;
        for step in &self.steps {
            total += g * step.reward;
            g *= gamma;
        }
        total
    }
}

/// Execute `policy` from the start state. Stops on entering a terminal
/// state, on geometric termination (discounted MDPs) or after `horizon_cap`
/// steps.
pub fn rollout<P, R>(mdp: &TabularMdp, policy: &P, rng: &mut R, horizon_cap: usize) -> Result<Trajectory>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    check_policy(mdp, policy)?;
    if horizon_cap == 0 {
        return Err(input("horizon cap must be at least 1"));
    }
    let gamma = mdp.gamma();
    let mut s = mdp.start_state();
    let mut steps = Vec::new();
    loop {
        let a = draw(policy, s, rng);
        steps.push(Step { state: s, action: a, reward: mdp.reward(s, a) });
        if gamma < 1.0 && rng.random::<f64>() >= gamma {
            return Ok(Trajectory { steps, terminated: Termination::Geometric });
        }
        if steps.len() >= horizon_cap {
            return Ok(Trajectory { steps, terminated: Termination::HorizonCap });
        }
        let next = mdp.sample_next(s, a, rng);
        if mdp.is_terminal(next) {
            return Ok(Trajectory { steps, terminated: Termination::Absorbed });
        }
        s = next;
    }
}

/// Discounted return of one rollout truncated at `cap` (no geometric
/// stopping), used for Monte-Carlo value estimates.
pub(crate) fn discounted_rollout_return<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    reward: &RewardFunction,
    rng: &mut R,
    cap: usize,
) -> f64
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let gamma = mdp.gamma();
    let mut s = mdp.start_state();
    let mut g = 1.0;
    let mut total = 0.0;
    for _ in 0..cap {
        let a = draw(policy, s, rng);
        total += g * reward.value(s, a);
        g *= gamma;
        let next = mdp.sample_next(s, a, rng);
        if mdp.is_terminal(next) && reward_vanishes(reward, next, mdp.num_actions()) {
            break;
        }
        s = next;
    }
    total
}

fn reward_vanishes(reward: &RewardFunction, s: usize, num_actions: usize) -> bool {
    (0..num_actions).all(|a| reward.value(s, a) == 0.0)
}
