//! Frozen output formats: JSONL records, CSV tables and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pcpg_core::pcpg::{RunRecord, RUN_RECORD_SCHEMA};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::run::SeedOutput;

pub const SUMMARY_CSV_SCHEMA: u32 = 1;
pub const EPISODES_CSV_SCHEMA: u32 = 1;
pub const VISITATION_CSV_SCHEMA: u32 = 1;
pub const CHECKPOINT_SCHEMA: u32 = 1;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const VISITATION_FILE: &str = "visitation.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One row per seed, describing the returned policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: u64,
    /// Episode whose policy is returned.
    pub episode: usize,
    /// Reported return of the returned policy.
    pub value: f64,
    /// Final-episode values below.
    pub escape_prob: f64,
    pub info_gain: f64,
    pub known_frac: f64,
    pub episodes: usize,
    /// Empty unless the run has a termination test.
    pub terminated: Option<bool>,
}

pub const SUMMARY_HEADER: &[&str] =
    &["seed", "episode", "value", "escape_prob", "info_gain", "known_frac", "episodes", "terminated"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub episode: usize,
    pub value: f64,
    pub reported_return: f64,
    pub value_with_bonus: f64,
    pub escape_prob: f64,
    pub info_gain: f64,
    pub known_states: usize,
    pub known_frac: f64,
    pub bonus_mean: f64,
}

pub const EPISODES_HEADER: &[&str] = &[
    "seed",
    "episode",
    "value",
    "reported_return",
    "value_with_bonus",
    "escape_prob",
    "info_gain",
    "known_states",
    "known_frac",
    "bonus_mean",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitationRow {
    pub seed: u64,
    /// Index of the policy in the final cover.
    pub policy: usize,
    pub state: usize,
    pub action: usize,
    pub count: u64,
}

pub const VISITATION_HEADER: &[&str] = &["seed", "policy", "state", "action", "count"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub schemas: Schemas,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schemas {
    pub run_record: u32,
    pub summary_csv: u32,
    pub episodes_csv: u32,
    pub visitation_csv: u32,
    pub checkpoint: u32,
}

impl Schemas {
    pub fn current() -> Self {
        Schemas {
            run_record: RUN_RECORD_SCHEMA,
            summary_csv: SUMMARY_CSV_SCHEMA,
            episodes_csv: EPISODES_CSV_SCHEMA,
            visitation_csv: VISITATION_CSV_SCHEMA,
            checkpoint: CHECKPOINT_SCHEMA,
        }
    }
}

pub fn summary_row(record: &RunRecord) -> Result<SummaryRow> {
    let last = record.episodes.last().context("run record has no episodes")?;
    Ok(SummaryRow {
        seed: record.seed,
        episode: record.best_episode,
        value: record.best_return,
        escape_prob: last.escape_prob,
        info_gain: last.info_gain,
        known_frac: last.known_frac,
        episodes: record.episodes.len(),
        terminated: record.terminated,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every artifact of a finished run into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, outputs: &[SeedOutput]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut jsonl = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
    for o in outputs {
        serde_json::to_writer(&mut jsonl, &o.record)?;
        jsonl.write_all(b"\n")?;
    }
    jsonl.flush()?;

    let summary = outputs.iter().map(|o| summary_row(&o.record)).collect::<Result<Vec<_>>>()?;
    write_csv(&dir.join(SUMMARY_FILE), summary, SUMMARY_HEADER)?;

    let episodes = outputs.iter().flat_map(|o| {
        o.record.episodes.iter().map(move |e| EpisodeRow {
            seed: o.seed,
            episode: e.episode,
            value: e.value,
            reported_return: e.reported_return,
            value_with_bonus: e.value_with_bonus,
            escape_prob: e.escape_prob,
            info_gain: e.info_gain,
            known_states: e.known_states,
            known_frac: e.known_frac,
            bonus_mean: e.bonus_mean,
        })
    });
    write_csv(&dir.join(EPISODES_FILE), episodes, EPISODES_HEADER)?;
    write_csv(&dir.join(VISITATION_FILE), outputs.iter().flat_map(|o| o.visitation.iter()), VISITATION_HEADER)?;

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        schemas: Schemas::current(),
        seeds: outputs.iter().map(|o| o.seed).collect(),
        files: [RECORDS_FILE, SUMMARY_FILE, EPISODES_FILE, VISITATION_FILE].iter().map(|s| s.to_string()).collect(),
        config: cfg.clone(),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// Reads a CSV after checking its header against the frozen column set.
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        bail!("{}: header mismatch, expected {:?}, found {:?}", path.display(), header, found);
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines().filter(|l| !l.is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}
