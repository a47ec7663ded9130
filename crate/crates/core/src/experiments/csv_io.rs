use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{BufferSweepRow, ExperimentError, LeaderboardEntry, RunResult, SummaryStats};
use crate::metrics::InstanceSparsity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunsCsvRow {
    pub method: String,
    pub config_id: String,
    pub seed: u64,
    pub cumulative_reward: f64,
    pub overlap: f64,
    pub live_neurons: usize,
    pub normalized_overlap: f64,
}

impl From<&RunResult> for RunsCsvRow {
    fn from(r: &RunResult) -> Self {
        Self {
            method: r.method.to_string(),
            config_id: r.config_id.clone(),
            seed: r.seed,
            cumulative_reward: r.cumulative_reward,
            overlap: r.overlap.overlap,
            live_neurons: r.overlap.live_neurons,
            normalized_overlap: r.overlap.normalized_overlap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardCsvRow {
    pub rank: usize,
    pub method: String,
    pub config_id: String,
    pub learning_rate: f64,
    pub buffer_size: usize,
    pub target_update_freq: usize,
    pub lambda: f64,
    pub lambda_kl: f64,
    pub beta: f64,
    pub dropout_p: f64,
    pub n: usize,
    pub avg: f64,
    pub sd: f64,
    pub me: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl From<&LeaderboardEntry> for LeaderboardCsvRow {
    fn from(e: &LeaderboardEntry) -> Self {
        let d = &e.config.dqn;
        Self {
            rank: e.rank,
            method: d.regularizer.kind.to_string(),
            config_id: e.config_id.clone(),
            learning_rate: d.learning_rate,
            buffer_size: d.buffer_capacity,
            target_update_freq: d.target_update_freq,
            lambda: d.regularizer.lambda,
            lambda_kl: d.regularizer.lambda_kl,
            beta: d.regularizer.beta,
            dropout_p: d.regularizer.dropout_p,
            n: e.stats.n,
            avg: e.stats.avg,
            sd: e.stats.sd,
            me: e.stats.me,
            ci_lower: e.stats.ci_lower,
            ci_upper: e.stats.ci_upper,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferSweepCsvRow {
    pub method: String,
    pub buffer_size: usize,
    pub config_id: String,
    pub n: usize,
    pub avg: f64,
    pub sd: f64,
    pub me: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl BufferSweepCsvRow {
    /// `None` when the cell had fewer than two confirmation runs.
    pub fn from_row(r: &BufferSweepRow) -> Option<Self> {
        let s = r.confirm.reward?;
        Some(Self {
            method: r.method.to_string(),
            buffer_size: r.buffer_size,
            config_id: r.config_id.clone(),
            n: s.n,
            avg: s.avg,
            sd: s.sd,
            me: s.me,
            ci_lower: s.ci_lower,
            ci_upper: s.ci_upper,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSparsityCsvRow {
    pub config_id: String,
    pub seed: u64,
    pub bin_left: f64,
    pub count: u64,
}

impl InstanceSparsityCsvRow {
    /// One row per bin, all bins included.
    pub fn rows(config_id: &str, seed: u64, histogram: &[u64]) -> Vec<Self> {
        histogram
            .iter()
            .enumerate()
            .map(|(k, &count)| Self {
                config_id: config_id.to_string(),
                seed,
                bin_left: InstanceSparsity::bin_left(k),
                count,
            })
            .collect()
    }
}

/// One metric summarized over confirmation runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryCsvRow {
    pub method: String,
    pub config_id: String,
    pub metric: String,
    pub n: usize,
    pub avg: f64,
    pub sd: f64,
    pub me: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl SummaryCsvRow {
    pub fn new(method: &str, config_id: &str, metric: &str, s: &SummaryStats) -> Self {
        Self {
            method: method.to_string(),
            config_id: config_id.to_string(),
            metric: metric.to_string(),
            n: s.n,
            avg: s.avg,
            sd: s.sd,
            me: s.me,
            ci_lower: s.ci_lower,
            ci_upper: s.ci_upper,
        }
    }
}

fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        drop(w);
        return Ok(());
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Appends `rows` to `path`, writing the header only when the file is new or empty.
pub fn append_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| e.into_error())?.flush()?;
    Ok(())
}

pub fn read_rows<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<R>, _>>()?)
}

pub fn write_runs_csv(path: &Path, runs: &[RunResult]) -> Result<(), ExperimentError> {
    write_rows(path, &runs.iter().map(RunsCsvRow::from).collect::<Vec<_>>())
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunsCsvRow>, ExperimentError> {
    read_rows(path)
}

pub fn write_leaderboard_csv(path: &Path, entries: &[LeaderboardEntry]) -> Result<(), ExperimentError> {
    write_rows(path, &entries.iter().map(LeaderboardCsvRow::from).collect::<Vec<_>>())
}

pub fn write_buffer_sweep_csv(path: &Path, rows: &[BufferSweepRow]) -> Result<(), ExperimentError> {
    write_rows(path, &rows.iter().filter_map(BufferSweepCsvRow::from_row).collect::<Vec<_>>())
}

/// Runs without live neurons have no distribution and are skipped.
pub fn write_instance_sparsity_csv(path: &Path, runs: &[RunResult]) -> Result<(), ExperimentError> {
    let rows: Vec<_> = runs
        .iter()
        .filter_map(|r| {
            r.instance_histogram
                .as_ref()
                .map(|h| InstanceSparsityCsvRow::rows(&r.config_id, r.seed, h))
        })
        .flatten()
        .collect();
    write_rows(path, &rows)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryCsvRow]) -> Result<(), ExperimentError> {
    write_rows(path, rows)
}

