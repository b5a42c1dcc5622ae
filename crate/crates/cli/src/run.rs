//! The `run` subcommand: one independent pipeline per seed.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pcpg_core::mdp::sample_index;
use pcpg_core::oracles::escape_probability;
use pcpg_core::pcpg::{
    reported_value, run_pcpg_observed, run_reward_free_observed, EpisodeRecord, EpisodeView, RunRecord,
    RUN_RECORD_SCHEMA,
};
use pcpg_core::{
    exact_occupancy, exact_policy_value, post_exploration_npg, run_classic_npg, stream_rng,
    PcpgConfig, Policy, RewardFunction, StartDistribution, TabularPolicy,
};
use rayon::prelude::*;

use crate::config::{AlgorithmSpec, Environment, ExperimentConfig, InitDistribution, PostReward};
use crate::output::VisitationRow;

// stream ids local to the CLI, far from the library's per-episode streams
const STREAM_BASELINE: u64 = 0xC11 << 40;
const STREAM_VISITS: u64 = 0xC12 << 40;

/// Everything one seed produces.
pub struct SeedOutput {
    pub seed: u64,
    pub record: RunRecord,
    pub visitation: Vec<VisitationRow>,
}

pub struct RunOptions {
    pub base_dir: PathBuf,
    pub checkpoint_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Runs every seed (in parallel when `workers` allows) and returns outputs
/// sorted by seed.
pub fn run_all(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<SeedOutput>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .context("building the worker pool")?;
    let mut outputs: Vec<SeedOutput> =
        pool.install(|| cfg.seeds.par_iter().map(|&seed| run_seed(cfg, seed, opts)).collect::<Result<Vec<_>>>())?;
    outputs.sort_by_key(|o| o.seed);
    Ok(outputs)
}

fn with_defaults(cfg: &PcpgConfig, seed: u64, env: &Environment) -> PcpgConfig {
    PcpgConfig { seed, report_gamma: cfg.report_gamma.or(env.report_gamma), ..cfg.clone() }
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64, opts: &RunOptions) -> Result<SeedOutput> {
    let env = cfg.environment.build(seed, &opts.base_dir).with_context(|| format!("seed {seed}: building environment"))?;
    let (mdp, features) = (&env.mdp, &env.features);
    let ckpt_dir = opts.checkpoint_dir.as_ref().map(|d| d.join(format!("seed_{seed}")));
    if let Some(dir) = &ckpt_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut observer = |view: &EpisodeView<'_>| -> pcpg_core::Result<()> {
        if let Some(dir) = &ckpt_dir {
            write_checkpoint(dir, view)?;
        }
        Ok(())
    };

    let (record, cover_policies) = match &cfg.algorithm {
        AlgorithmSpec::Pcpg { config } => {
            let pc = with_defaults(config, seed, &env);
            let out = run_pcpg_observed(mdp, features, &pc, &mut observer).with_context(|| format!("seed {seed}"))?;
            (out.record, out.cover.policies().to_vec())
        }
        AlgorithmSpec::RewardFree { config } => {
            let mut rf = config.clone();
            rf.base = with_defaults(&rf.base, seed, &env);
            let out =
                run_reward_free_observed(mdp, features, &rf, &mut observer).with_context(|| format!("seed {seed}"))?;
            (out.record, out.cover.policies().to_vec())
        }
        AlgorithmSpec::ClassicNpg { npg, init } => {
            let dist = match init {
                InitDistribution::StartState => {
                    let mut d = vec![0.0; mdp.num_states()];
                    d[mdp.start_state()] = 1.0;
                    d
                }
                InitDistribution::Uniform => vec![1.0 / mdp.num_states() as f64; mdp.num_states()],
            };
            let mut rng = stream_rng(seed, STREAM_BASELINE);
            let pi = run_classic_npg(mdp, features, &dist, npg, &mut rng).with_context(|| format!("seed {seed}"))?;
            let pi = pi.to_tabular();
            let reward = RewardFunction::from_mdp(mdp);
            let record = single_policy_record("classic_npg", seed, &env, &pi, &reward, None)?;
            (record, vec![pi])
        }
        AlgorithmSpec::PostNpg { exploration, npg, reward } => {
            let mut rf = exploration.clone();
            rf.base = with_defaults(&rf.base, seed, &env);
            let out =
                run_reward_free_observed(mdp, features, &rf, &mut observer).with_context(|| format!("seed {seed}"))?;
            let r = match *reward {
                PostReward::Environment => RewardFunction::from_mdp(mdp),
                PostReward::Sparse { state, action } => {
                    mdp.check_state(state)?;
                    mdp.check_action(action)?;
                    let mut table = vec![0.0; mdp.num_pairs()];
                    table[mdp.pair_index(state, action)] = 1.0;
                    RewardFunction::from_table(mdp.num_actions(), table)?
                }
            };
            let mut rng = stream_rng(seed, STREAM_BASELINE);
            let pi = post_exploration_npg(mdp, features, &out.cover, &r, npg, &mut rng)
                .with_context(|| format!("seed {seed}: post-exploration NPG"))?
                .to_tabular();
            let post = single_policy_record("post_npg", seed, &env, &pi, &r, Some((&out.record, out.known.pair_mask())))?;
            (post, out.cover.policies().to_vec())
        }
    };

    let visitation = visitation_counts(&env, &cover_policies, cfg.visitation_samples, seed)?;
    Ok(SeedOutput { seed, record, visitation })
}

/// A record for algorithms that return one policy. Without exploration there
/// is no bonus, so every state counts as known.
fn single_policy_record(
    algorithm: &str,
    seed: u64,
    env: &Environment,
    pi: &TabularPolicy,
    reward: &RewardFunction,
    exploration: Option<(&RunRecord, &[bool])>,
) -> Result<RunRecord> {
    let mdp = &env.mdp;
    let value = exact_policy_value(mdp, pi, reward)?.value(mdp.start_state());
    let reported_return = if reward.table() == mdp.reward_table() { reported_value(mdp, pi, env.report_gamma)? } else { value };
    let mut episodes: Vec<EpisodeRecord> = Vec::new();
    let (escape_prob, info_gain, known_states, known_frac) = match exploration {
        Some((rec, mask)) => {
            episodes.extend(rec.episodes.iter().cloned());
            let last = rec.episodes.last().context("exploration produced no episodes")?;
            (escape_probability(mdp, pi, mask)?, last.info_gain, last.known_states, last.known_frac)
        }
        None => (0.0, 0.0, mdp.num_states(), 1.0),
    };
    let episode = episodes.len();
    episodes.push(EpisodeRecord {
        episode,
        value,
        value_with_bonus: value,
        reported_return,
        escape_prob,
        info_gain,
        known_states,
        known_frac,
        bonus_mean: 0.0,
        npg_best_iteration: 0,
        elapsed_ms: None,
    });
    Ok(RunRecord {
        schema_version: RUN_RECORD_SCHEMA,
        algorithm: algorithm.to_string(),
        seed,
        episodes,
        best_episode: episode,
        best_return: reported_return,
        terminated: exploration.and_then(|(rec, _)| rec.terminated),
    })
}

fn write_checkpoint(dir: &Path, view: &EpisodeView<'_>) -> pcpg_core::Result<()> {
    let path = dir.join(format!("episode_{:04}.json", view.episode));
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec(&view.checkpoint())?)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

/// Pair counts from `samples` draws of each policy's discounted occupancy
/// (exact probabilities, seeded multinomial draws).
fn visitation_counts(env: &Environment, policies: &[TabularPolicy], samples: usize, seed: u64) -> Result<Vec<VisitationRow>> {
    let mdp = &env.mdp;
    let a_n = mdp.num_actions();
    let mut rows = Vec::new();
    for (i, pi) in policies.iter().enumerate() {
        let d = exact_occupancy(mdp, pi, &StartDistribution::StartState)?;
        let probs: Vec<f64> = {
            let total = d.total();
            d.values.iter().map(|v| v / total).collect()
        };
        let mut counts = vec![0u64; probs.len()];
        let mut rng = stream_rng(seed, STREAM_VISITS + i as u64);
        for _ in 0..samples {
            counts[sample_index(&probs, &mut rng)] += 1;
        }
        debug_assert_eq!(pi.num_actions(), a_n);
        rows.extend(counts.iter().enumerate().map(|(p, &count)| VisitationRow {
            seed,
            policy: i,
            state: p / a_n,
            action: p % a_n,
            count,
        }));
    }
    Ok(rows)
}
