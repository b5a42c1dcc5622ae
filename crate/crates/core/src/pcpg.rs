//! The PC-PG outer loop, its reward-free variant, post-exploration NPG and
//! the classic NPG baseline.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{
    information_gain, rebalance_weights, BonusOracle, CovarianceAccumulator, CovarianceDocument, CovarianceMatrix,
    KnownSet, RegularizedInverse,
};
use crate::cover::PolicyCover;
use crate::environments::FeatureMap;
use crate::error::{input, Result};
use crate::mdp::{
    policy_table, sample_discounted_pair, stream_rng, Policy, RewardFunction, StartDistribution, TabularMdp,
    TabularPolicy,
};
use crate::npg::{npg_update, NpgConfig, NpgProblem, Restart, SoftmaxLinearPolicy};
use crate::oracles::{escape_probability, exact_occupancy, exact_policy_value, mc_value};

pub const RUN_RECORD_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RebalanceConfig {
    pub iterations: usize,
    pub step: f64,
}

impl Default for RebalanceConfig {
    fn default() -> Self {
        RebalanceConfig { iterations: 2000, step: 1e-3 }
    }
}

/// How reported policy values are computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Evaluation {
    Exact,
    MonteCarlo { rollouts: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcpgConfig {
    /// `N`.
    pub episodes: usize,
    /// `K`, samples per covariance estimate.
    pub covariance_samples: usize,
    pub lambda: f64,
    /// Defaults to `1 / (2 d)`.
    pub beta: Option<f64>,
    pub npg: NpgConfig,
    /// Reweights the restart distribution only; the bonus always uses the
    /// unweighted covariance sum.
    pub rebalance: Option<RebalanceConfig>,
    pub evaluation: Evaluation,
    /// Discount for reported returns when it differs from the learning
    /// discount (e.g. 1 for episodic benchmarks learned with `gamma < 1`).
    pub report_gamma: Option<f64>,
    pub seed: u64,
    /// Store wall-clock time per episode (makes records non-reproducible).
    pub record_timing: bool,
}

impl Default for PcpgConfig {
    fn default() -> Self {
        PcpgConfig {
            episodes: 10,
            covariance_samples: 1000,
            lambda: 1.0,
            beta: None,
            npg: NpgConfig::default(),
            rebalance: None,
            evaluation: Evaluation::Exact,
            report_gamma: None,
            seed: 0,
            record_timing: false,
        }
    }
}

impl PcpgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.covariance_samples == 0 {
            return Err(input("PC-PG needs N >= 1 and K >= 1"));
        }
        if !(self.lambda > 0.0) {
            return Err(input("lambda must be positive"));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) {
                return Err(input("beta must be positive"));
            }
        }
        if let Evaluation::MonteCarlo { rollouts } = self.evaluation {
            if rollouts < 2 {
                return Err(input("Monte-Carlo evaluation needs at least two rollouts"));
            }
        }
        if let Some(g) = self.report_gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(input("report_gamma must lie in [0, 1]"));
            }
        }
        self.npg.validate()
    }

    pub fn beta_for(&self, dim: usize) -> f64 {
        self.beta.unwrap_or(1.0 / (2.0 * dim as f64))
    }
}

/// How the escape probability is measured in the reward-free loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EscapeEval {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardFreeConfig {
    /// The reward is overridden with zero.
    pub base: PcpgConfig,
    pub escape_threshold: f64,
    #[serde(default = "exact_escape")]
    pub escape_eval: EscapeEval,
}

fn exact_escape() -> EscapeEval {
    EscapeEval::Exact
}

impl RewardFreeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.escape_threshold > 0.0 && self.escape_threshold < 1.0) {
            return Err(input("escape threshold must lie in (0, 1)"));
        }
        if let EscapeEval::MonteCarlo { samples: 0 } = self.escape_eval {
            return Err(input("escape estimation needs samples"));
        }
        self.base.validate()
    }
}

/// Per-episode diagnostics of `pi^{n+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// `V(s0; r)` under the learning discount.
    pub value: f64,
    /// `V(s0; r + b^n)`.
    pub value_with_bonus: f64,
    /// Value under the report discount in raw (unshifted) reward units.
    pub reported_return: f64,
    /// `sum_{(s,a) : b^n(s,a) > 0} d^{pi^{n+1}}(s, a)`.
    pub escape_prob: f64,
    /// `log det(I + sum_i Sigma_i / lambda)` over the cover.
    pub info_gain: f64,
    pub known_states: usize,
    pub known_frac: f64,
    /// `E_{d^{pi^n}}[b^n]`.
    pub bonus_mean: f64,
    pub npg_best_iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub algorithm: String,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    /// Episode whose policy has the highest reported return.
    pub best_episode: usize,
    pub best_return: f64,
    /// Reward-free runs: whether the escape criterion fired before the cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated: Option<bool>,
}

impl RunRecord {
    fn new(algorithm: &str, seed: u64) -> Self {
        RunRecord {
            schema_version: RUN_RECORD_SCHEMA,
            algorithm: algorithm.to_string(),
            seed,
            episodes: Vec::new(),
            best_episode: 0,
            best_return: f64::NEG_INFINITY,
            terminated: None,
        }
    }

    pub fn escape_probs(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.escape_prob).collect()
    }
}

/// Serializable snapshot written after every episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub episode: usize,
    pub cover_weights: Vec<f64>,
    /// Tabulated `pi(a|s)` of every cover policy.
    pub cover_policies: Vec<Vec<f64>>,
    pub covariances: Vec<CovarianceDocument>,
    /// Parameters `w` of the newest NPG policy.
    pub latest_weights: Vec<f64>,
    pub latest_policy: Vec<f64>,
    pub record: RunRecord,
}

impl Checkpoint {
    /// Rebuild the cover for an MDP with `num_actions` actions.
    pub fn cover(&self, num_actions: usize) -> Result<PolicyCover> {
        if self.cover_policies.len() != self.covariances.len() {
            return Err(input("checkpoint has mismatched policy and covariance counts"));
        }
        let mut cover = PolicyCover::new();
        for (table, cov) in self.cover_policies.iter().zip(&self.covariances) {
            cover.push(TabularPolicy::from_table(num_actions, table.clone())?, CovarianceMatrix::from_document(cov)?)?;
        }
        cover.set_weights(self.cover_weights.clone())?;
        Ok(cover)
    }

    pub fn latest(&self, num_actions: usize) -> Result<TabularPolicy> {
        TabularPolicy::from_table(num_actions, self.latest_policy.clone())
    }
}

/// State handed to the per-episode observer.
pub struct EpisodeView<'a> {
    pub episode: usize,
    pub cover: &'a PolicyCover,
    pub latest: &'a SoftmaxLinearPolicy,
    pub record: &'a RunRecord,
}

impl EpisodeView<'_> {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            episode: self.episode,
            cover_weights: self.cover.weights().to_vec(),
            cover_policies: self.cover.policies().iter().map(|p| p.table().to_vec()).collect(),
            covariances: self.cover.covariances().iter().map(|c| c.to_document()).collect(),
            latest_weights: self.latest.weights().to_vec(),
            latest_policy: self.latest.to_tabular().table().to_vec(),
            record: self.record.clone(),
        }
    }
}

pub struct PcpgOutcome {
    pub cover: PolicyCover,
    /// `pi^1..pi^N` returned by the NPG updates.
    pub policies: Vec<SoftmaxLinearPolicy>,
    pub best: TabularPolicy,
    pub record: RunRecord,
}

pub struct RewardFreeOutcome {
    /// `{pi^0..pi^n}` at termination.
    pub cover: PolicyCover,
    /// Known set `K^n` of the terminating episode.
    pub known: KnownSet,
    pub record: RunRecord,
}

// stream ids: every episode draws from its own generators
const STREAM_COV: u64 = 1 << 32;
const STREAM_NPG: u64 = 2 << 32;
const STREAM_EVAL: u64 = 3 << 32;

/// Mean of `phi phi^T` over `samples` draws from `d^pi`.
pub fn estimate_policy_covariance<P, R>(
    mdp: &TabularMdp,
    features: &FeatureMap,
    policy: &P,
    samples: usize,
    rng: &mut R,
) -> Result<CovarianceMatrix>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let mut acc = CovarianceAccumulator::new(features.dim());
    for _ in 0..samples {
        let p = sample_discounted_pair(mdp, policy, &StartDistribution::StartState, rng, None)?;
        acc.push_pair(features, p.state, p.action);
    }
    Ok(acc.finish())
}

struct Reporter {
    mdp: TabularMdp,
    reward: RewardFunction,
}

impl Reporter {
    fn new(mdp: &TabularMdp, reward: &RewardFunction, report_gamma: Option<f64>) -> Result<Self> {
        let mdp = match report_gamma {
            Some(g) if g != mdp.gamma() => mdp.with_gamma(g)?,
            _ => mdp.clone(),
        };
        Ok(Reporter { mdp, reward: reward.clone() })
    }

    fn raw(&self, shifted: f64) -> f64 {
        match self.mdp.reward_shift() {
            None => shifted,
            Some(shift) if self.mdp.is_episodic() => shift.raw_episode_return(shifted),
            Some(shift) => shift.raw_discounted_value(shifted, self.mdp.gamma()),
        }
    }

    fn value<P: Policy + ?Sized, R: Rng + ?Sized>(&self, policy: &P, eval: Evaluation, rng: &mut R) -> Result<f64> {
        let v = evaluate(&self.mdp, policy, &self.reward, eval, rng)?;
        Ok(self.raw(v))
    }
}

fn evaluate<P: Policy + ?Sized, R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
    reward: &RewardFunction,
    eval: Evaluation,
    rng: &mut R,
) -> Result<f64> {
    match eval {
        Evaluation::Exact => Ok(exact_policy_value(mdp, policy, reward)?.value(mdp.start_state())),
        Evaluation::MonteCarlo { rollouts } => Ok(mc_value(mdp, policy, reward, rollouts, rng)?.0),
    }
}

/// Raw value of a policy under the report discount of `cfg`.
pub fn reported_value<P: Policy + ?Sized>(mdp: &TabularMdp, policy: &P, report_gamma: Option<f64>) -> Result<f64> {
    let reporter = Reporter::new(mdp, &RewardFunction::from_mdp(mdp), report_gamma)?;
    reporter.value(policy, Evaluation::Exact, &mut stream_rng(0, 0))
}

struct LoopSpec<'a> {
    algorithm: &'a str,
    reward: RewardFunction,
    escape: Option<(f64, EscapeEval)>,
}

struct LoopResult {
    cover: PolicyCover,
    policies: Vec<SoftmaxLinearPolicy>,
    best: TabularPolicy,
    record: RunRecord,
    last_known: KnownSet,
    terminal_cover_len: usize,
}

fn pcpg_loop(
    mdp: &TabularMdp,
    features: &FeatureMap,
    cfg: &PcpgConfig,
    spec: LoopSpec<'_>,
    observer: &mut dyn FnMut(&EpisodeView<'_>) -> Result<()>,
) -> Result<LoopResult> {
    cfg.validate()?;
    features.check_compatible(mdp)?;
    if mdp.is_episodic() {
        return Err(input("PC-PG learns with gamma < 1; set report_gamma for episodic reporting"));
    }
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let beta = cfg.beta_for(features.dim());
    let reporter = Reporter::new(mdp, &spec.reward, cfg.report_gamma)?;
    let mut record = RunRecord::new(spec.algorithm, cfg.seed);
    let mut cover = PolicyCover::new();
    let mut policies: Vec<SoftmaxLinearPolicy> = Vec::new();
    let mut best = TabularPolicy::uniform(s_n, a_n);
    let mut current = TabularPolicy::uniform(s_n, a_n);
    let mut last_known = KnownSet::from_bonus_table(a_n, &vec![1.0; s_n * a_n]);
    let mut terminal_cover_len = 0;
    let mut prev_known = 0;

    for n in 0..cfg.episodes {
        let start = Instant::now();
        let mut cov_rng = stream_rng(cfg.seed, STREAM_COV + n as u64);
        let mut npg_rng = stream_rng(cfg.seed, STREAM_NPG + n as u64);
        let mut eval_rng = stream_rng(cfg.seed, STREAM_EVAL + n as u64);

        let sigma = estimate_policy_covariance(mdp, features, &current, cfg.covariance_samples, &mut cov_rng)?;
        cover.push(current.clone(), sigma)?;
        let inv = RegularizedInverse::new(&cover.covariance_sum()?, cfg.lambda)?;
        let oracle = BonusOracle::new(inv, beta, mdp.gamma())?;
        let bonus_table = oracle.bonus_table(features);
        let known = KnownSet::from_bonus_table(a_n, &bonus_table);
        if cfg.rebalance.is_none() && known.known_states() < prev_known {
            log::warn!("known set shrank from {prev_known} to {} states", known.known_states());
        }
        prev_known = known.known_states();
        if let Some(rb) = cfg.rebalance {
            let alpha = rebalance_weights(cover.covariances(), cfg.lambda, rb.iterations, rb.step)?;
            cover.set_weights(alpha)?;
        }

        let problem =
            NpgProblem { mdp, features, reward: &spec.reward, restart: Restart::Cover(&cover), bonus: Some(&oracle) };
        let outcome = npg_update(&problem, &cfg.npg, &mut npg_rng)?;
        let next = outcome.policy;

        let bonus_fn = RewardFunction::from_table(a_n, bonus_table.clone())?;
        let shaped = spec.reward.plus(&bonus_table)?;
        let value = evaluate(mdp, &next, &spec.reward, cfg.evaluation, &mut eval_rng)?;
        let value_with_bonus = evaluate(mdp, &next, &shaped, cfg.evaluation, &mut eval_rng)?;
        let reported_return = reporter.value(&next, cfg.evaluation, &mut eval_rng)?;
        let escape_prob = match spec.escape.map(|e| e.1).unwrap_or(EscapeEval::Exact) {
            EscapeEval::Exact => escape_probability(mdp, &next, known.pair_mask())?,
            EscapeEval::MonteCarlo { samples } => {
                let mut hits = 0usize;
                for _ in 0..samples {
                    let p = sample_discounted_pair(mdp, &next, &StartDistribution::StartState, &mut eval_rng, None)?;
                    if !known.pair_known(p.state, p.action) {
                        hits += 1;
                    }
                }
                hits as f64 / samples as f64
            }
        };
        let occupancy = exact_occupancy(mdp, &current, &StartDistribution::StartState)?;
        let bonus_mean = occupancy.expectation(bonus_fn.table());
        let info_gain = information_gain(cover.covariances(), cfg.lambda)?;

        let episode = EpisodeRecord {
            episode: n,
            value,
            value_with_bonus,
            reported_return,
            escape_prob,
            info_gain,
            known_states: known.known_states(),
            known_frac: known.fraction(),
            bonus_mean,
            npg_best_iteration: outcome.best_iteration,
            elapsed_ms: cfg.record_timing.then(|| start.elapsed().as_millis() as u64),
        };
        log::debug!(
            "episode {n}: value {value:.4} reported {reported_return:.4} known {}/{} escape {escape_prob:.4}",
            episode.known_states,
            s_n
        );
        if reported_return > record.best_return {
            record.best_return = reported_return;
            record.best_episode = n;
            best = next.to_tabular();
        }
        record.episodes.push(episode);
        current = next.to_tabular();
        policies.push(next);
        last_known = known;
        terminal_cover_len = cover.len();

        observer(&EpisodeView { episode: n, cover: &cover, latest: policies.last().expect("just pushed"), record: &record })?;

        if let Some((threshold, _)) = spec.escape {
            if escape_prob <= threshold {
                record.terminated = Some(true);
                break;
            }
        }
    }
    if spec.escape.is_some() && record.terminated.is_none() {
        record.terminated = Some(false);
    }
    Ok(LoopResult { cover, policies, best, record, last_known, terminal_cover_len })
}

/// PC-PG: grow a policy cover, reward rarely visited directions, and run NPG
/// from the cover's restart distribution each episode.
pub fn run_pcpg(mdp: &TabularMdp, features: &FeatureMap, cfg: &PcpgConfig) -> Result<PcpgOutcome> {
    run_pcpg_observed(mdp, features, cfg, &mut |_| Ok(()))
}

pub fn run_pcpg_observed(
    mdp: &TabularMdp,
    features: &FeatureMap,
    cfg: &PcpgConfig,
    observer: &mut dyn FnMut(&EpisodeView<'_>) -> Result<()>,
) -> Result<PcpgOutcome> {
    let spec = LoopSpec { algorithm: "pcpg", reward: RewardFunction::from_mdp(mdp), escape: None };
    let out = pcpg_loop(mdp, features, cfg, spec, observer)?;
    Ok(PcpgOutcome { cover: out.cover, policies: out.policies, best: out.best, record: out.record })
}

/// PC-PG with `r = 0`, stopped once the newest policy escapes the known set
/// with probability at most the threshold.
pub fn run_reward_free(mdp: &TabularMdp, features: &FeatureMap, cfg: &RewardFreeConfig) -> Result<RewardFreeOutcome> {
    run_reward_free_observed(mdp, features, cfg, &mut |_| Ok(()))
}

pub fn run_reward_free_observed(
    mdp: &TabularMdp,
    features: &FeatureMap,
    cfg: &RewardFreeConfig,
    observer: &mut dyn FnMut(&EpisodeView<'_>) -> Result<()>,
) -> Result<RewardFreeOutcome> {
    cfg.validate()?;
    let spec = LoopSpec {
        algorithm: "reward_free",
        reward: RewardFunction::zero(mdp.num_states(), mdp.num_actions()),
        escape: Some((cfg.escape_threshold, cfg.escape_eval)),
    };
    let out = pcpg_loop(mdp, features, &cfg.base, spec, observer)?;
    debug_assert_eq!(out.terminal_cover_len, out.cover.len());
    Ok(RewardFreeOutcome { cover: out.cover, known: out.last_known, record: out.record })
}

/// NPG on a new reward with the cover's `rho_mix` as restart distribution and
/// no bonus.
pub fn post_exploration_npg<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    features: &FeatureMap,
    cover: &PolicyCover,
    reward: &RewardFunction,
    cfg: &NpgConfig,
    rng: &mut R,
) -> Result<SoftmaxLinearPolicy> {
    if cover.is_empty() {
        return Err(input("post-exploration NPG needs a non-empty cover"));
    }
    let problem = NpgProblem { mdp, features, reward, restart: Restart::Cover(cover), bonus: None };
    Ok(npg_update(&problem, cfg, rng)?.policy)
}

/// NPG from a fixed state distribution with uniform root actions and no bonus.
pub fn run_classic_npg<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    features: &FeatureMap,
    init_dist: &[f64],
    cfg: &NpgConfig,
    rng: &mut R,
) -> Result<SoftmaxLinearPolicy> {
    let sum: f64 = init_dist.iter().sum();
    if init_dist.len() != mdp.num_states() || init_dist.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(input("initial distribution must be a distribution over states"));
    }
    let reward = RewardFunction::from_mdp(mdp);
    let problem = NpgProblem { mdp, features, reward: &reward, restart: Restart::States(init_dist), bonus: None };
    Ok(npg_update(&problem, cfg, rng)?.policy)
}

/// Materialize any policy over the MDP's states.
pub fn tabulate<P: Policy + ?Sized>(mdp: &TabularMdp, policy: &P) -> TabularPolicy {
    policy_table(policy, mdp.num_states())
}

/// Accuracy and model inputs for the theoretical hyperparameter settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub w: f64,
    pub actions: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcpgTheory {
    pub iterations_t: f64,
    pub lambda: f64,
    pub beta: f64,
    pub episodes_n: f64,
    /// `d ln(N + 1)` bound on `I_N(1)` for unit-norm features.
    pub info_gain_bound: f64,
    pub samples_m: f64,
    pub covariance_samples_k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardFreeTheory {
    pub escape_threshold: f64,
    pub beta: f64,
    pub iterations_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicNpgTheory {
    pub iterations_n: f64,
    /// Uses `kappa = d`, the relative condition number of matching covariances.
    pub samples_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub inputs: TheoryInputs,
    pub pcpg: PcpgTheory,
    pub reward_free: RewardFreeTheory,
    pub classic_npg: ClassicNpgTheory,
}

/// Hyperparameters prescribed by the sample-complexity theorems. These are
/// astronomically conservative and meant for documentation.
pub fn theory_params(inp: TheoryInputs) -> Result<TheoryParams> {
    let TheoryInputs { epsilon, delta, gamma, w, actions, dim } = inp;
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || !(0.0..1.0).contains(&gamma) || !(w > 0.0) {
        return Err(input("need epsilon > 0, delta in (0, 1), gamma in [0, 1), W > 0"));
    }
    if actions < 2 || dim == 0 {
        return Err(input("need at least two actions and a positive dimension"));
    }
    let h = 1.0 - gamma;
    let ln_a = (actions as f64).ln();
    let d = dim as f64;
    let t = 4.0 * w * w * ln_a / (h * h * epsilon * epsilon);
    let beta = epsilon * epsilon * h * h / (4.0 * w * w);
    // smallest N with N >= 4 W^2 d ln(N + 1) / ((1 - gamma)^3 eps^3)
    let c = 4.0 * w * w * d / (h.powi(3) * epsilon.powi(3));
    let mut n = c.max(1.0);
    for _ in 0..200 {
        let next = c * (n + 1.0).ln();
        if (next - n).abs() <= 1e-9 * n {
            n = next;
            break;
        }
        n = next;
    }
    let n = n.ceil();
    let info = d * (n + 1.0).ln();
    let m = 144.0 * w.powi(4) * info * info * (n * t / delta).ln() / (epsilon.powi(6) * h.powi(10));
    let k = 32.0 * n * n * (n * d / delta).ln();
    let classic_n = 4.0 * w * w * ln_a / (epsilon * epsilon);
    let classic_m =
        16.0 * w.powi(4) * (actions as f64).powi(4) * d * d * (classic_n / delta).ln() / (h * h * epsilon.powi(4));
    Ok(TheoryParams {
        inputs: inp,
        pcpg: PcpgTheory {
            iterations_t: t,
            lambda: 1.0,
            beta,
            episodes_n: n,
            info_gain_bound: info,
            samples_m: m,
            covariance_samples_k: k,
        },
        reward_free: RewardFreeTheory { escape_threshold: h * epsilon, beta, iterations_t: t },
        classic_npg: ClassicNpgTheory { iterations_n: classic_n, samples_m: classic_m },
    })
}
