mod common;

use common::{chi_square_p, random_policy};
use pcpg_core::environments::{build_chain, build_random_tabular};
use pcpg_core::mdp::{Termination, DEFAULT_TAIL};
use pcpg_core::*;
use proptest::prelude::*;

#[test]
fn occupancy_frequencies_within_three_standard_errors() {
    let mdp = build_random_tabular(3, 2, 2, 0.6, 1).unwrap();
    let pi = random_policy(3, 2, 2);
    let exact = exact_occupancy(&mdp, &pi, &StartDistribution::StartState).unwrap();
    let n = 1_000_000;
    let mut counts = vec![0u64; mdp.num_pairs()];
    let mut rng = stream_rng(0, 1);
    for _ in 0..n {
        let p = sample_discounted_pair(&mdp, &pi, &StartDistribution::StartState, &mut rng, None).unwrap();
        counts[mdp.pair_index(p.state, p.action)] += 1;
    }
    for (c, &p) in counts.iter().zip(&exact.values) {
        let freq = *c as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * se + 1e-12, "freq {freq} vs {p} (se {se})");
    }
}

#[test]
fn depth_is_geometric() {
    let mdp = build_chain(1, 2, 0.5).unwrap();
    let pi = TabularPolicy::uniform(1, 2);
    let mut counts = vec![0u64; 25];
    let mut rng = stream_rng(1, 1);
    for _ in 0..100_000 {
        let p = sample_discounted_pair(&mdp, &pi, &StartDistribution::StartState, &mut rng, Some(500)).unwrap();
        counts[p.depth.min(24)] += 1;
    }
    let mut pmf: Vec<f64> = (0..24).map(|k| 0.5f64.powi(k + 1)).collect();
    pmf.push(0.5f64.powi(24));
    assert!(chi_square_p(&counts, &pmf) > 0.01);
}

#[test]
fn gamma_zero_q_is_reward() {
    let mdp = build_random_tabular(4, 3, 2, 0.0, 3).unwrap();
    let pi = random_policy(4, 3, 4);
    let r = RewardFunction::from_mdp(&mdp);
    let mut rng = stream_rng(2, 0);
    for s in 0..4 {
        for a in 0..3 {
            assert_eq!(estimate_q(&mdp, &pi, &r, s, a, &mut rng, None).unwrap(), mdp.reward(s, a));
        }
    }
}

#[test]
fn absorbing_loop_q_is_geometric_series() {
    let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0, 0.9).unwrap();
    let pi = TabularPolicy::uniform(1, 1);
    let r = RewardFunction::from_mdp(&mdp);
    let mut rng = stream_rng(3, 0);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| estimate_q(&mdp, &pi, &r, 0, 0, &mut rng, None).unwrap()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
    assert!((mean - 10.0).abs() <= 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn episodic_combolock_q_matches_exact_value() {
    let lock = build_combolock(3, (5.0, 2.0), 0).unwrap();
    let r = RewardFunction::from_mdp(&lock.mdp);
    let (_, pi) = value_iteration(&lock.mdp, &r, 1e-12).unwrap();
    let exact = exact_policy_value(&lock.mdp, &pi, &r).unwrap();
    let s0 = lock.start();
    let a0 = (0..10).find(|&a| pi.action_probs(s0)[a] > 0.5).unwrap();
    let mut rng = stream_rng(4, 0);
    let n = 2000;
    let xs: Vec<f64> = (0..n).map(|_| estimate_q(&lock.mdp, &pi, &r, s0, a0, &mut rng, None).unwrap()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
    // the optimal combolock return is deterministic, so the standard error is ~0
    assert!((mean - exact.q(s0, a0)).abs() <= 3.0 * se + 1e-9);
    let raw = lock.mdp.reward_shift().unwrap().raw_episode_return(exact.value(s0));
    assert!((raw - 4.0).abs() < 1e-9);
}

#[test]
fn first_transition_marginals_follow_p() {
    let mdp = build_random_tabular(5, 2, 3, 0.95, 5).unwrap();
    let pi = random_policy(5, 2, 6);
    let mut expect = vec![0.0; 5];
    for a in 0..2 {
        for (s, p) in mdp.transition_row(0, a).iter().enumerate() {
            expect[s] += pi.action_probs(0)[a] * p;
        }
    }
    let mut counts = vec![0u64; 5];
    let mut rng = stream_rng(5, 0);
    let mut seen = 0;
    while seen < 100_000 {
        let t = rollout(&mdp, &pi, &mut rng, 3).unwrap();
        if t.steps.len() >= 2 {
            counts[t.steps[1].state] += 1;
            seen += 1;
        }
    }
    assert!(chi_square_p(&counts, &expect) > 0.01);
}

#[test]
fn capped_rollouts_are_rare() {
    let mdp = build_random_tabular(4, 2, 2, 0.9, 7).unwrap();
    let pi = random_policy(4, 2, 8);
    let cap = mdp.horizon_cap(DEFAULT_TAIL).unwrap();
    let mut rng = stream_rng(6, 0);
    let n = 100_000;
    let capped = (0..n)
        .filter(|_| rollout(&mdp, &pi, &mut rng, cap).unwrap().terminated == Termination::HorizonCap)
        .count();
    assert!((capped as f64 / n as f64) <= 2.0 * DEFAULT_TAIL);
}

#[test]
fn occupancy_is_normalized() {
    for seed in 0..10 {
        let mdp = build_random_tabular(6, 3, 2, 0.95, seed).unwrap();
        let pi = random_policy(6, 3, seed);
        let d = exact_occupancy(&mdp, &pi, &StartDistribution::StartState).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn undiscounted_cyclic_mdp_is_rejected() {
    let cyclic = TabularMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0], 0, 1.0);
    assert!(cyclic.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_same_draws(seed in any::<u64>(), stream in any::<u64>()) {
        let mdp = build_random_tabular(5, 3, 2, 0.8, 9).unwrap();
        let pi = random_policy(5, 3, 10);
        let draw = |seed, stream| {
            let mut rng = stream_rng(seed, stream);
            (0..20)
                .map(|_| sample_discounted_pair(&mdp, &pi, &StartDistribution::StartState, &mut rng, None).unwrap())
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(draw(seed, stream), draw(seed, stream));
    }
}
