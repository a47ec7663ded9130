//! Experiment protocol: seeded runs, lower-confidence-bound grid search,
//! confirmation reruns on fresh seeds, and the buffer-size sweep.
//!
//! Everything here is a pure function of the specs and the master seed;
//! runs are distributed over a bounded worker pool but results are always
//! collected in submission order.

mod csv_io;
mod search;
mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{run_training_with, AgentError, DqnConfig};
use crate::envs::{make_env, EnvConstants, EnvError, EnvKind};
use crate::metrics::{self, ActivityPattern, InstanceSparsity, MetricsError, OverlapReport};
use crate::nn::QNetwork;
use crate::regularizers::RegularizerKind;

pub use csv_io::{
    append_rows, read_rows, read_runs_csv, write_buffer_sweep_csv, write_instance_sparsity_csv, write_leaderboard_csv, write_runs_csv,
    write_summary_csv, BufferSweepCsvRow, InstanceSparsityCsvRow, LeaderboardCsvRow, RunsCsvRow, SummaryCsvRow,
};
pub use search::{
    buffer_sweep, confirm, grid_search, rank_leaderboard, BufferSweepRow, BufferSweepSpec, ConfirmOutcome,
    GridSearchOutcome, LeaderboardEntry, SweepSpec, CONFIRM_SEED_OFFSET, default_learning_rates,
    DEFAULT_BETAS, DEFAULT_BUFFER_SIZES, DEFAULT_DROPOUT_PS, DEFAULT_LAMBDAS, DEFAULT_LAMBDA_KLS, DEFAULT_TARGET_FREQS,
};
pub use stats::{summarize, t_critical_95, StatsError, SummaryStats};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("every configuration failed; nothing to rank")]
    NoSuccessfulConfig,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Everything that determines a single training run except its seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    #[serde(default)]
    pub env_constants: EnvConstants,
    #[serde(default)]
    pub dqn: DqnConfig,
    /// Environment steps; defaults per environment (see [`default_total_steps`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<u64>,
    /// Metric grid points per state dimension; defaults per environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default = "default_log_interval")]
    pub log_interval: u64,
}

fn default_log_interval() -> u64 {
    crate::agent::DEFAULT_LOG_INTERVAL
}

/// Training length per environment: 200k steps for mountain car, 500k for catcher.
pub fn default_total_steps(env: EnvKind) -> u64 {
    match env {
        EnvKind::MountainCar => 200_000,
        EnvKind::Catcher => 500_000,
        EnvKind::Chain => 20_000,
    }
}

/// Grid points per dimension: 100 for mountain car, 10 for catcher (10k vertices each).
pub fn default_grid_points(env: EnvKind, constants: &EnvConstants) -> usize {
    match env {
        EnvKind::MountainCar => 100,
        EnvKind::Catcher => 10,
        EnvKind::Chain => constants.chain_length.0,
    }
}

impl RunConfig {
    pub fn new(env: EnvKind, dqn: DqnConfig) -> Self {
        Self {
            env,
            env_constants: EnvConstants::default(),
            dqn,
            total_steps: None,
            grid_points: None,
            log_interval: default_log_interval(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.total_steps.unwrap_or_else(|| default_total_steps(self.env))
    }

    pub fn grid_points_per_dim(&self) -> usize {
        self.grid_points
            .unwrap_or_else(|| default_grid_points(self.env, &self.env_constants))
    }

    /// Copy with every defaulted field made explicit.
    pub fn resolved(&self) -> Self {
        Self {
            total_steps: Some(self.steps()),
            grid_points: Some(self.grid_points_per_dim()),
            ..self.clone()
        }
    }

    pub fn method(&self) -> RegularizerKind {
        self.dqn.regularizer.kind
    }

    /// Stable 16-hex-digit hash of the resolved configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(&self.resolved()).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.dqn.validate()?;
        make_env(self.env, &self.env_constants)?;
        if self.grid_points_per_dim() < 2 {
            return Err(ExperimentError::Spec("grid_points must be >= 2".into()));
        }
        Ok(())
    }
}

/// RNG seed for run `seed` of configuration `config_id` under `master_seed`.
pub fn derive_seed(master_seed: u64, config_id: &str, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(config_id.as_bytes());
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// One finished run with its sparsity measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub method: RegularizerKind,
    pub config_id: String,
    pub seed: u64,
    pub rng_seed: u64,
    pub cumulative_reward: f64,
    pub interval_rewards: Vec<f64>,
    pub episodes_completed: u64,
    pub overlap: OverlapReport,
    /// `None` when the final network has no live neurons on the grid.
    pub instance_histogram: Option<Vec<u64>>,
    pub network: QNetwork<f64>,
}

/// Trains one configuration on one seed and measures its final representation.
pub fn execute_run(config: &RunConfig, seed: u64, master_seed: u64) -> Result<RunResult, ExperimentError> {
    config.validate()?;
    let config_id = config.fingerprint();
    let rng_seed = derive_seed(master_seed, &config_id, seed);
    let mut env = make_env(config.env, &config.env_constants)?;
    let record = run_training_with::<f64, _>(
        env.as_mut(),
        &config.dqn,
        config.steps(),
        rng_seed,
        config.log_interval,
        |_| {},
    )?;

    let grid = metrics::build_grid(env.spec(), &vec![config.grid_points_per_dim(); env.spec().state_dim])?;
    let pattern = ActivityPattern::from_activations(&metrics::representation_on_grid(&record.network, &grid)?)?;
    let overlap = OverlapReport::from_pattern(&pattern)?;
    let instance_histogram = match InstanceSparsity::from_pattern(&pattern) {
        Ok(s) => Some(s.histogram),
        Err(MetricsError::NoLiveNeurons) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(RunResult {
        method: config.method(),
        config_id,
        seed,
        rng_seed,
        cumulative_reward: record.cumulative_reward,
        interval_rewards: record.interval_rewards,
        episodes_completed: record.episodes_completed,
        overlap,
        instance_histogram,
        network: record.network,
    })
}

/// Executes `(config, seed)` jobs on `workers` threads; results come back in job order.
pub fn run_jobs(
    jobs: &[(RunConfig, u64)],
    master_seed: u64,
    workers: usize,
) -> Result<Vec<Result<RunResult, ExperimentError>>, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|(cfg, seed)| {
                let r = execute_run(cfg, *seed, master_seed);
                match &r {
                    Ok(run) => log::info!(
                        "{} seed {} -> cumulative reward {}",
                        run.config_id,
                        seed,
                        run.cumulative_reward
                    ),
                    Err(e) => log::error!("run {} seed {} failed: {e}", cfg.fingerprint(), seed),
                }
                r
            })
            .collect()
    }))
}
