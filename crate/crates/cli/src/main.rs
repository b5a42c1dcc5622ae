use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pcpg_cli::eval::{evaluate, EvalOptions};
use pcpg_cli::output::write_outputs;
use pcpg_cli::run::{run_all, RunOptions};
use pcpg_cli::{ConfigError, ExperimentConfig};
use pcpg_core::oracles::ComparatorMode;
use pcpg_core::pcpg::{theory_params, TheoryInputs};

#[derive(Parser)]
#[command(name = "pcpg", version, about = "Policy-cover policy gradient experiments on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write records, CSVs and a manifest.
    Run {
        config: PathBuf,
        /// A seed count `N` (seeds 0..N) or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Write one JSON checkpoint per episode under `<dir>/seed_<s>/`.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Worker threads across seeds (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Evaluate a checkpoint (or the uniform policy) in the config's environment.
    Eval {
        config: PathBuf,
        #[arg(long, conflicts_with = "uniform")]
        checkpoint: Option<PathBuf>,
        /// Evaluate the uniform policy instead of a checkpoint.
        #[arg(long)]
        uniform: bool,
        /// Seed for the environment and the Monte-Carlo rollouts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        rollouts: usize,
        #[arg(long, value_enum, default_value_t = Comparator::UniformActions)]
        comparator: Comparator,
    },
    /// Print the theoretical hyperparameter settings as JSON.
    TheoryParams {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        w: f64,
        #[arg(long)]
        actions: usize,
        /// Feature dimension.
        #[arg(long)]
        dim: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Comparator {
    UniformActions,
    OnPolicy,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = || ConfigError(format!("--seeds expects a count or a comma-separated list, got {spec:?}"));
    if spec.contains(',') {
        return spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect();
    }
    let n: u64 = spec.trim().parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok((0..n).collect())
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, seeds, out_dir, checkpoint_dir, workers } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(spec) = seeds {
                cfg.seeds = parse_seeds(&spec)?;
            }
            let base_dir = config_dir(&config);
            // environment parameters are part of the config, so reject bad ones up front
            cfg.environment.build(cfg.seeds[0], &base_dir).map_err(|e| ConfigError(format!("environment: {e}")))?;
            let out = out_dir.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let opts = RunOptions { base_dir, checkpoint_dir: checkpoint_dir.or_else(|| cfg.checkpoint_dir.clone()), workers };
            let outputs = run_all(&cfg, &opts)?;
            write_outputs(&out, &cfg, &outputs)?;
            log::info!("wrote {} seed(s) to {}", outputs.len(), out.display());
        }
        Command::Eval { config, checkpoint, uniform, seed, rollouts, comparator } => {
            let cfg = ExperimentConfig::load(&config)?;
            if checkpoint.is_none() && !uniform {
                return Err(ConfigError("eval needs --checkpoint <file> or --uniform".into()).into());
            }
            if rollouts < 2 {
                return Err(ConfigError("--rollouts must be at least 2".into()).into());
            }
            let base_dir = config_dir(&config);
            let comparator = match comparator {
                Comparator::UniformActions => ComparatorMode::UniformActions,
                Comparator::OnPolicy => ComparatorMode::OnPolicy,
            };
            let opts = EvalOptions { seed, checkpoint: checkpoint.as_deref(), rollouts, comparator, base_dir: &base_dir };
            let report = evaluate(&cfg, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::TheoryParams { epsilon, delta, gamma, w, actions, dim } => {
            let params = theory_params(TheoryInputs { epsilon, delta, gamma, w, actions, dim })
                .map_err(|e| ConfigError(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&params).context("serializing parameters")?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POLICY_COVER_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
