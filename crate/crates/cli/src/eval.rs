//! The `eval` subcommand: exact and Monte-Carlo values, the transfer-error
//! diagnostic and the information gain of a checkpoint (or the uniform policy).

use std::path::Path;

use anyhow::{Context, Result};
use pcpg_core::oracles::{ComparatorMode, TransferProblem};
use pcpg_core::pcpg::{reported_value, Checkpoint};
use pcpg_core::{
    exact_occupancy, exact_policy_value, information_gain, mc_value, stream_rng, transfer_error_diagnostic,
    value_iteration, BonusOracle, RegularizedInverse, RewardFunction, StartDistribution, TabularPolicy,
};
use serde::{Deserialize, Serialize};

use crate::config::{Environment, ExperimentConfig};

const STREAM_EVAL: u64 = 0xC13 << 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `"uniform"` or the checkpoint path.
    pub policy: String,
    pub episode: Option<usize>,
    /// Exact value under the learning discount.
    pub value: f64,
    /// Exact raw return under the report discount.
    pub reported_return: f64,
    /// Monte-Carlo estimate of `reported_return`.
    pub mc_reported_return: f64,
    pub mc_stderr: f64,
    pub mc_rollouts: usize,
    pub transfer_error: f64,
    pub on_policy_loss: f64,
    pub info_gain: f64,
}

pub struct EvalOptions<'a> {
    pub seed: u64,
    pub checkpoint: Option<&'a Path>,
    pub rollouts: usize,
    pub comparator: ComparatorMode,
    pub base_dir: &'a Path,
}

pub fn evaluate(cfg: &ExperimentConfig, opts: &EvalOptions<'_>) -> Result<EvalReport> {
    let env = cfg.environment.build(opts.seed, opts.base_dir).context("building environment")?;
    let mdp = &env.mdp;
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let report_gamma = cfg.pcpg_config().and_then(|c| c.report_gamma).or(env.report_gamma);

    let (policy, episode, rho, bonus, info_gain, label) = match opts.checkpoint {
        None => {
            let pi = TabularPolicy::uniform(s_n, a_n);
            let rho = exact_occupancy(mdp, &pi, &StartDistribution::StartState)?;
            (pi, None, rho, vec![0.0; s_n * a_n], 0.0, "uniform".to_string())
        }
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
            let ckpt: Checkpoint = serde_json::from_str(&text).context("parsing checkpoint")?;
            let cover = ckpt.cover(a_n)?;
            let pc = cfg.pcpg_config().context("checkpoints come from PC-PG runs; the config has no PC-PG settings")?;
            let inv = RegularizedInverse::new(&cover.covariance_sum()?, pc.lambda)?;
            let bonus = BonusOracle::new(inv, pc.beta_for(env.features.dim()), mdp.gamma())?.bonus_table(&env.features);
            let gain = information_gain(cover.covariances(), pc.lambda)?;
            let rho = cover.exact_restart(mdp)?;
            (ckpt.latest(a_n)?, Some(ckpt.episode), rho, bonus, gain, path.display().to_string())
        }
    };

    let reward = RewardFunction::from_mdp(mdp);
    let value = exact_policy_value(mdp, &policy, &reward)?.value(mdp.start_state());
    let reported_return = reported_value(mdp, &policy, report_gamma)?;
    let (mc_reported_return, mc_stderr) = mc_reported(&env, &policy, report_gamma, opts.rollouts, opts.seed)?;
    let (_, pi_star) = value_iteration(mdp, &reward, 1e-12)?;
    let transfer = transfer_error_diagnostic(&TransferProblem {
        mdp,
        features: &env.features,
        rho_mix: &rho,
        policy: &policy,
        reward: &reward,
        bonus: &bonus,
        comparator: &pi_star,
        comparator_mode: opts.comparator,
        norm_bound: cfg.norm_bound(),
    })?;
    Ok(EvalReport {
        policy: label,
        episode,
        value,
        reported_return,
        mc_reported_return,
        mc_stderr,
        mc_rollouts: opts.rollouts,
        transfer_error: transfer.transfer_error,
        on_policy_loss: transfer.on_policy_loss,
        info_gain,
    })
}

/// Monte-Carlo raw return under the report discount.
fn mc_reported(
    env: &Environment,
    policy: &TabularPolicy,
    report_gamma: Option<f64>,
    rollouts: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mdp = match report_gamma {
        Some(g) => env.mdp.with_gamma(g)?,
        None => env.mdp.clone(),
    };
    let reward = RewardFunction::from_mdp(&mdp);
    let (mean, se) = mc_value(&mdp, policy, &reward, rollouts, &mut stream_rng(seed, STREAM_EVAL))?;
    Ok(match mdp.reward_shift() {
        None => (mean, se),
        Some(shift) if mdp.is_episodic() => (shift.raw_episode_return(mean), se / shift.scale),
        Some(shift) => (shift.raw_discounted_value(mean, mdp.gamma()), se / shift.scale),
    })
}
