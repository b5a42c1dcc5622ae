//! PC-PG on the combination lock with tabular features.
//!
//! `cargo run --release -p pcpg-core --example combolock -- <H> <seeds>`

use pcpg_core::npg::{CriticKind, IterateSelection};
use pcpg_core::pcpg::reported_value;
use pcpg_core::{build_combolock, run_pcpg, tabular_onehot_features, NpgConfig, PcpgConfig};

fn main() -> pcpg_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let horizon: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let episodes: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4 * horizon);
    let beta: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(500.0);
    let lambda: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let eta: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let mut solved = 0;
    let t0 = std::time::Instant::now();
    for seed in 0..seeds {
        let lock = build_combolock(horizon, (5.0, 2.0), seed)?;
        let learn = lock.mdp.with_gamma(0.9)?;
        let features = tabular_onehot_features(&learn);
        let cfg = PcpgConfig {
            episodes,
            covariance_samples: 2000,
            lambda,
            beta: Some(beta),
            npg: NpgConfig {
                iterations: 20,
                samples: 2000,
                eta: Some(eta),
                norm_bound: 1e3,
                critic: CriticKind::Exact,
                selection: IterateSelection::Exact,
                ..NpgConfig::default()
            },
            report_gamma: Some(1.0),
            seed,
            ..PcpgConfig::default()
        };
        let out = run_pcpg(&learn, &features, &cfg)?;
        let v = reported_value(&learn, &out.best, Some(1.0))?;
        let last = out.record.episodes.last().unwrap();
        if v >= 3.5 {
            solved += 1;
        }
        println!(
            "seed {seed}: best {v:.3} at {} last {:.3} known {}/{} ({:.1}s)",
            out.record.best_episode,
            last.reported_return,
            last.known_states,
            learn.num_states(),
            t0.elapsed().as_secs_f64()
        );
    }
    println!("solved {solved}/{seeds}");
    Ok(())
}
