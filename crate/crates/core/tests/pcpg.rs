mod common;

use pcpg_core::environments::{build_chain, build_random_tabular};
use pcpg_core::npg::{CriticKind, IterateSelection};
use pcpg_core::pcpg::{run_pcpg_observed, Checkpoint, EscapeEval, Evaluation, RebalanceConfig};
use pcpg_core::*;

fn npg(iterations: usize, samples: usize, eta: f64, w: f64) -> NpgConfig {
    NpgConfig {
        iterations,
        samples,
        eta: Some(eta),
        norm_bound: w,
        critic: CriticKind::Exact,
        selection: IterateSelection::Exact,
        ..NpgConfig::default()
    }
}

fn tabular_cfg(episodes: usize, seed: u64) -> PcpgConfig {
    PcpgConfig {
        episodes,
        covariance_samples: 2000,
        lambda: 1e-3,
        beta: Some(50.0),
        npg: npg(30, 1000, 1.0, 100.0),
        seed,
        ..PcpgConfig::default()
    }
}

#[test]
fn huge_threshold_means_no_bonus() {
    let mdp = build_random_tabular(5, 2, 2, 0.9, 1).unwrap();
    let features = tabular_onehot_features(&mdp);
    let cfg = PcpgConfig { beta: Some(1e12), ..tabular_cfg(3, 1) };
    let out = run_pcpg(&mdp, &features, &cfg).unwrap();
    for e in &out.record.episodes {
        assert_eq!(e.known_states, 5);
        assert_eq!(e.bonus_mean, 0.0);
        assert!((e.value - e.value_with_bonus).abs() < 1e-12);
    }
}

#[test]
fn small_linear_mdp_is_solved() {
    let lin = build_random_linear_mdp(6, 2, 4, 0.9, 2).unwrap();
    let r = RewardFunction::from_mdp(&lin.mdp);
    let (v_star, _) = value_iteration(&lin.mdp, &r, 1e-12).unwrap();
    let cfg = PcpgConfig { npg: npg(60, 2000, 2.0, 100.0), ..tabular_cfg(4, 2) };
    let out = run_pcpg(&lin.mdp, &lin.features, &cfg).unwrap();
    assert!(out.record.best_return >= v_star.value(0) - 0.05, "{} vs {}", out.record.best_return, v_star.value(0));
    let v_best = exact_policy_value(&lin.mdp, &out.best, &r).unwrap().value(0);
    assert!((v_best - out.record.best_return).abs() < 1e-9);
}

#[test]
fn known_set_and_information_gain_grow() {
    let mdp = build_random_tabular(8, 3, 2, 0.9, 3).unwrap();
    let features = tabular_onehot_features(&mdp);
    let out = run_pcpg(&mdp, &features, &tabular_cfg(5, 3)).unwrap();
    for pair in out.record.episodes.windows(2) {
        assert!(pair[1].known_states >= pair[0].known_states);
        assert!(pair[1].info_gain >= pair[0].info_gain - 1e-9);
    }
    assert_eq!(out.cover.len(), 5);
    assert_eq!(out.policies.len(), 5);
}

#[test]
fn single_state_reward_free_stops_immediately() {
    let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 0.0], 0, 0.9).unwrap();
    let features = tabular_onehot_features(&mdp);
    let cfg = RewardFreeConfig { base: tabular_cfg(10, 4), escape_threshold: 0.05, escape_eval: EscapeEval::Exact };
    let out = run_reward_free(&mdp, &features, &cfg).unwrap();
    assert_eq!(out.record.terminated, Some(true));
    assert_eq!(out.record.episodes.len(), 1);
    assert_eq!(out.known.known_states(), 1);
}

#[test]
fn chain_exploration_terminates_and_covers() {
    let mdp = build_chain(5, 2, 0.9).unwrap();
    let features = tabular_onehot_features(&mdp);
    let base = PcpgConfig {
        episodes: 40,
        covariance_samples: 4000,
        npg: npg(30, 2000, 0.5, 1e3),
        ..tabular_cfg(40, 5)
    };
    let theta = 0.05;
    let cfg = RewardFreeConfig { base, escape_threshold: theta, escape_eval: EscapeEval::Exact };
    let out = run_reward_free(&mdp, &features, &cfg).unwrap();
    assert_eq!(out.record.terminated, Some(true));
    let last = out.record.episodes.last().unwrap();
    assert!(last.escape_prob <= theta);
    let max_escape = max_escape_probability(&mdp, out.known.pair_mask()).unwrap();
    assert!(max_escape <= 2.0 * theta, "max escape {max_escape}");

    // reward only at the far end of the chain
    let mut table = vec![0.0; mdp.num_pairs()];
    table[mdp.pair_index(4, 1)] = 1.0;
    let reward = RewardFunction::from_table(2, table).unwrap();
    let (v_star, _) = value_iteration(&mdp, &reward, 1e-12).unwrap();
    let pi = post_exploration_npg(&mdp, &features, &out.cover, &reward, &npg(60, 2000, 0.5, 1e3), &mut stream_rng(5, 1))
        .unwrap();
    let v = exact_policy_value(&mdp, &pi, &reward).unwrap().value(0);
    assert!(v >= v_star.value(0) - 0.1, "{v} vs {}", v_star.value(0));
}

#[test]
fn post_exploration_rejects_empty_cover_and_handles_zero_reward() {
    let mdp = build_random_tabular(4, 2, 2, 0.9, 6).unwrap();
    let features = tabular_onehot_features(&mdp);
    let zero = RewardFunction::zero(4, 2);
    let mut rng = stream_rng(6, 0);
    assert!(post_exploration_npg(&mdp, &features, &PolicyCover::new(), &zero, &npg(5, 100, 1.0, 10.0), &mut rng).is_err());
    let mut cover = PolicyCover::new();
    cover.push(TabularPolicy::uniform(4, 2), CovarianceMatrix::zeros(8)).unwrap();
    let pi = post_exploration_npg(&mdp, &features, &cover, &zero, &npg(5, 100, 1.0, 10.0), &mut rng).unwrap();
    assert!(pi.weights().iter().all(|&w| w == 0.0));
}

#[test]
fn classic_npg_with_full_support_start_is_near_optimal() {
    let mdp = build_random_tabular(6, 2, 2, 0.9, 7).unwrap();
    let features = tabular_onehot_features(&mdp);
    let r = RewardFunction::from_mdp(&mdp);
    let (v_star, _) = value_iteration(&mdp, &r, 1e-12).unwrap();
    let pi = run_classic_npg(&mdp, &features, &[1.0 / 6.0; 6], &npg(60, 2000, 1.0, 100.0), &mut stream_rng(7, 0))
        .unwrap();
    let v = exact_policy_value(&mdp, &pi, &r).unwrap().value(0);
    assert!(v >= v_star.value(0) - 0.05);
    assert!(run_classic_npg(&mdp, &features, &[0.5; 6], &npg(1, 1, 1.0, 1.0), &mut stream_rng(7, 0)).is_err());
}

#[test]
fn runs_are_deterministic_per_seed() {
    let mdp = build_random_tabular(5, 2, 2, 0.9, 8).unwrap();
    let features = tabular_onehot_features(&mdp);
    let cfg = PcpgConfig {
        evaluation: Evaluation::MonteCarlo { rollouts: 32 },
        npg: NpgConfig { selection: IterateSelection::MonteCarlo { rollouts: 16 }, ..npg(5, 200, 1.0, 100.0) },
        ..tabular_cfg(3, 8)
    };
    let a = serde_json::to_string(&run_pcpg(&mdp, &features, &cfg).unwrap().record).unwrap();
    let b = serde_json::to_string(&run_pcpg(&mdp, &features, &cfg).unwrap().record).unwrap();
    assert_eq!(a, b);
    let other = PcpgConfig { seed: 9, ..cfg };
    let c = serde_json::to_string(&run_pcpg(&mdp, &features, &other).unwrap().record).unwrap();
    assert_ne!(a, c);
}

#[test]
fn checkpoints_round_trip_through_json() {
    let mdp = build_random_tabular(5, 2, 2, 0.9, 9).unwrap();
    let features = tabular_onehot_features(&mdp);
    let mut saved: Vec<String> = Vec::new();
    let out = run_pcpg_observed(&mdp, &features, &tabular_cfg(3, 9), &mut |view| {
        saved.push(serde_json::to_string(&view.checkpoint())?);
        Ok(())
    })
    .unwrap();
    assert_eq!(saved.len(), 3);
    let last: Checkpoint = serde_json::from_str(saved.last().unwrap()).unwrap();
    assert_eq!(serde_json::to_string(&last).unwrap(), *saved.last().unwrap());
    let cover = last.cover(2).unwrap();
    assert_eq!(cover.policies(), out.cover.policies());
    assert_eq!(cover.weights(), out.cover.weights());
    for (a, b) in cover.covariances().iter().zip(out.cover.covariances()) {
        assert_eq!(a.matrix(), b.matrix());
    }
    assert_eq!(last.latest(2).unwrap(), out.policies.last().unwrap().to_tabular());
    assert_eq!(last.record.episodes.len(), 3);
}

#[test]
fn rebalanced_run_keeps_weights_on_simplex() {
    let mdp = build_random_tabular(6, 2, 2, 0.9, 10).unwrap();
    let features = tabular_onehot_features(&mdp);
    let cfg = PcpgConfig { rebalance: Some(RebalanceConfig::default()), ..tabular_cfg(4, 10) };
    let out = run_pcpg(&mdp, &features, &cfg).unwrap();
    let w = out.cover.weights();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(w.iter().all(|&x| x >= 0.0));
}

#[test]
fn episodic_mdps_need_a_learning_discount() {
    let lock = build_combolock(2, (5.0, 2.0), 0).unwrap();
    assert!(run_pcpg(&lock.mdp, &lock.features, &tabular_cfg(1, 0)).is_err());
}
