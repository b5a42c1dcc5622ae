//! Config-driven experiment runner for PC-PG and its baselines.

pub mod config;
pub mod eval;
pub mod output;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
