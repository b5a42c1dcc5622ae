//! Experiment configuration files.

use std::path::{Path, PathBuf};

use pcpg_core::environments::{
    build_aggregated_instance, build_bandit, build_chain, build_random_tabular, FeatureDocument,
};
use pcpg_core::mdp::MdpDocument;
use pcpg_core::pcpg::PcpgConfig;
use pcpg_core::{
    build_binary_tree, build_combolock, build_random_linear_mdp, tabular_onehot_features, FeatureMap, NpgConfig,
    RewardFreeConfig, TabularMdp,
};
use serde::{Deserialize, Serialize};

/// Invalid or unreadable configuration. Mapped to exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

fn default_final_rewards() -> (f64, f64) {
    (5.0, 2.0)
}

fn default_learning_gamma() -> f64 {
    0.9
}

/// Environment name plus its parameters. A missing `seed` follows the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Combolock {
        horizon: usize,
        #[serde(default = "default_final_rewards")]
        final_rewards: (f64, f64),
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_learning_gamma")]
        learning_gamma: f64,
        #[serde(default)]
        features: LockFeatures,
    },
    BinaryTree {
        depth: usize,
        dim: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_learning_gamma")]
        learning_gamma: f64,
    },
    LinearMdp {
        states: usize,
        actions: usize,
        dim: usize,
        gamma: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Aggregated {
        states: usize,
        actions: usize,
        classes: usize,
        noise: f64,
        gamma: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    RandomTabular {
        states: usize,
        actions: usize,
        branching: usize,
        gamma: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Chain {
        length: usize,
        actions: usize,
        gamma: f64,
    },
    Bandit {
        rewards: Vec<f64>,
        #[serde(default)]
        gamma: f64,
    },
    /// An MDP document and an optional feature document (one-hot if absent),
    /// paths relative to the config file.
    File {
        mdp: PathBuf,
        #[serde(default)]
        features: Option<PathBuf>,
    },
}

/// Feature map for the combination lock.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockFeatures {
    /// One indicator per state-action pair.
    #[default]
    Onehot,
    /// Branch, level and lock indicators plus the action, normalized.
    Factored,
}

/// A built environment ready for learning.
pub struct Environment {
    /// Discounted MDP the algorithms learn in.
    pub mdp: TabularMdp,
    pub features: FeatureMap,
    /// Discount for reported returns when the benchmark is episodic.
    pub report_gamma: Option<f64>,
}

impl EnvironmentSpec {
    pub fn build(&self, run_seed: u64, base_dir: &Path) -> pcpg_core::Result<Environment> {
        let seed = |s: &Option<u64>| s.unwrap_or(run_seed);
        let plain = |mdp: TabularMdp, features: FeatureMap| Environment { mdp, features, report_gamma: None };
        Ok(match self {
            EnvironmentSpec::Combolock { horizon, final_rewards, seed: s, learning_gamma, features } => {
                let lock = build_combolock(*horizon, *final_rewards, seed(s))?;
                let mdp = lock.mdp.with_gamma(*learning_gamma)?;
                let features = match features {
                    LockFeatures::Onehot => tabular_onehot_features(&mdp),
                    LockFeatures::Factored => lock.features,
                };
                Environment { mdp, features, report_gamma: Some(1.0) }
            }
            EnvironmentSpec::BinaryTree { depth, dim, seed: s, learning_gamma } => {
                let tree = build_binary_tree(*depth, *dim, seed(s))?;
                Environment { mdp: tree.mdp.with_gamma(*learning_gamma)?, features: tree.features, report_gamma: Some(1.0) }
            }
            EnvironmentSpec::LinearMdp { states, actions, dim, gamma, seed: s } => {
                let lin = build_random_linear_mdp(*states, *actions, *dim, *gamma, seed(s))?;
                plain(lin.mdp, lin.features)
            }
            EnvironmentSpec::Aggregated { states, actions, classes, noise, gamma, seed: s } => {
                let inst = build_aggregated_instance(*states, *actions, *classes, *noise, *gamma, seed(s))?;
                plain(inst.mdp, inst.features)
            }
            EnvironmentSpec::RandomTabular { states, actions, branching, gamma, seed: s } => {
                let mdp = build_random_tabular(*states, *actions, *branching, *gamma, seed(s))?;
                let features = tabular_onehot_features(&mdp);
                plain(mdp, features)
            }
            EnvironmentSpec::Chain { length, actions, gamma } => {
                let mdp = build_chain(*length, *actions, *gamma)?;
                let features = tabular_onehot_features(&mdp);
                plain(mdp, features)
            }
            EnvironmentSpec::Bandit { rewards, gamma } => {
                let mdp = build_bandit(rewards, *gamma)?;
                let features = tabular_onehot_features(&mdp);
                plain(mdp, features)
            }
            EnvironmentSpec::File { mdp, features } => {
                let doc: MdpDocument = read_json(&base_dir.join(mdp))?;
                let mdp = TabularMdp::from_document(&doc)?;
                let features = match features {
                    Some(path) => {
                        let doc: FeatureDocument = read_json(&base_dir.join(path))?;
                        let f = FeatureMap::from_document(&doc)?;
                        f.check_compatible(&mdp)?;
                        f
                    }
                    None => tabular_onehot_features(&mdp),
                };
                plain(mdp, features)
            }
        })
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> pcpg_core::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| pcpg_core::Error::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Root distribution of the classic NPG baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitDistribution {
    /// Point mass on the start state.
    #[default]
    StartState,
    /// Uniform over all states.
    Uniform,
}

/// Reward used by post-exploration NPG.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PostReward {
    /// The environment's own reward.
    #[default]
    Environment,
    /// 1 at a single pair and 0 elsewhere.
    Sparse { state: usize, action: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Pcpg {
        #[serde(default)]
        config: PcpgConfig,
    },
    RewardFree {
        config: RewardFreeConfig,
    },
    ClassicNpg {
        #[serde(default)]
        npg: NpgConfig,
        #[serde(default)]
        init: InitDistribution,
    },
    /// Reward-free exploration followed by NPG from the cover on `reward`.
    PostNpg {
        exploration: RewardFreeConfig,
        #[serde(default)]
        npg: NpgConfig,
        #[serde(default)]
        reward: PostReward,
    },
}

fn default_visitation_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub algorithm: AlgorithmSpec,
    /// Overridden by `--seeds`.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Draws from each final cover policy for the visitation CSV.
    #[serde(default = "default_visitation_samples")]
    pub visitation_samples: usize,
    /// Overridden by `--out-dir`.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Overridden by `--checkpoint-dir`.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |r: pcpg_core::Result<()>| r.map_err(|e| ConfigError(e.to_string()));
        match &self.algorithm {
            AlgorithmSpec::Pcpg { config } => check(config.validate())?,
            AlgorithmSpec::RewardFree { config } => check(config.validate())?,
            AlgorithmSpec::ClassicNpg { npg, .. } => check(npg.validate())?,
            AlgorithmSpec::PostNpg { exploration, npg, .. } => {
                check(exploration.validate())?;
                check(npg.validate())?;
            }
        }
        if self.seeds.is_empty() {
            return Err(ConfigError("seeds must not be empty".into()));
        }
        Ok(())
    }

    /// PC-PG settings used by `eval` for bonuses (absent for classic NPG).
    pub fn pcpg_config(&self) -> Option<&PcpgConfig> {
        match &self.algorithm {
            AlgorithmSpec::Pcpg { config } => Some(config),
            AlgorithmSpec::RewardFree { config } => Some(&config.base),
            AlgorithmSpec::PostNpg { exploration, .. } => Some(&exploration.base),
            AlgorithmSpec::ClassicNpg { .. } => None,
        }
    }

    pub fn norm_bound(&self) -> f64 {
        match &self.algorithm {
            AlgorithmSpec::ClassicNpg { npg, .. } => npg.norm_bound,
            AlgorithmSpec::PostNpg { npg, .. } => npg.norm_bound,
            _ => self.pcpg_config().map(|c| c.npg.norm_bound).unwrap_or(NpgConfig::default().norm_bound),
        }
    }
}
