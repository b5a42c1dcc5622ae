//! Policy-cover policy gradient (PC-PG) with exact dynamic-programming
//! oracles for tabular MDPs.
//!
//! Learning routines only touch an MDP through its samplers; the oracles in
//! [`oracles`] solve the same MDPs exactly and serve as ground truth.

pub mod covariance;
pub mod cover;
pub mod critic;
pub mod environments;
pub mod error;
pub mod mdp;
pub mod npg;
pub mod oracles;
pub mod pcpg;

pub use covariance::{
    accumulate_covariance, bonus, information_gain, intrinsic_dimension, known_set, rebalance_weights,
    relative_condition, BonusOracle, CovarianceMatrix, KnownSet, RegularizedInverse,
};
pub use cover::{sample_from_cover, CoverSampling, PolicyCover};
pub use critic::{fit_exact_constrained, fit_projected_sgd, CriticFit, RegressionDataset};
pub use environments::{
    build_aggregated_features, build_binary_tree, build_combolock, build_random_linear_mdp, tabular_onehot_features,
    AggregationSpec, FeatureMap, LinearMdpSpec,
};
pub use error::{Error, Result};
pub use mdp::{
    estimate_q, rollout, sample_discounted_pair, stream_rng, Policy, RewardFunction, StartDistribution, TabularMdp,
    TabularPolicy, Trajectory,
};
pub use npg::{npg_update, policy_probs, NpgConfig, SoftmaxLinearPolicy};
pub use oracles::{
    exact_occupancy, exact_policy_value, max_escape_probability, mc_value, transfer_error_diagnostic, value_iteration,
    OccupancyVector, ValueTable,
};
pub use pcpg::{
    post_exploration_npg, run_classic_npg, run_pcpg, run_reward_free, PcpgConfig, RewardFreeConfig, RunRecord,
};
