//! Command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{self, ConfigError, Overrides};
use crate::envs::{self, EnvConstants, EnvKind};
use crate::experiments::{
    self, append_rows, BufferSweepSpec, ExperimentError, InstanceSparsityCsvRow, RunConfig, RunResult, SummaryCsvRow,
    SweepSpec,
};
use crate::metrics::{self, ActivityPattern, InstanceSparsity, MetricsError, OverlapReport};
use crate::nn::QNetwork;
use crate::regularizers::RegularizerKind;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "sparse-dqn", version, about = "Sparse-representation DQN experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration on a list of seeds.
    Train(TrainArgs),
    /// Search a parameter grid and rank combinations by the lower 95% confidence bound.
    GridSearch(GridSearchArgs),
    /// Rerun one configuration on fresh seeds and summarize.
    Confirm(ConfirmArgs),
    /// Search and confirm each method at each replay buffer size.
    BufferSweep(BufferSweepArgs),
    /// Measure overlap and instance sparsity of a saved network.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args, Default)]
pub struct ConfigFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_kl: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub dropout_p: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub buffer: Option<i64>,
    #[arg(long)]
    pub target_freq: Option<i64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub steps: Option<i64>,
    /// `a..b` (inclusive) or a comma-separated list.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub master_seed: Option<i64>,
    /// Metric grid points per state dimension.
    #[arg(long)]
    pub grid: Option<i64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<i64>,
}

impl ConfigFlags {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        o.set_opt("env", self.env.clone())
            .set_opt("dqn.regularizer.kind", self.method.clone())
            .set_opt("dqn.regularizer.lambda", self.lambda)
            .set_opt("dqn.regularizer.lambda_kl", self.lambda_kl)
            .set_opt("dqn.regularizer.beta", self.beta)
            .set_opt("dqn.regularizer.dropout_p", self.dropout_p)
            .set_opt("dqn.learning_rate", self.lr)
            .set_opt("dqn.buffer_capacity", self.buffer)
            .set_opt("dqn.target_update_freq", self.target_freq)
            .set_opt("dqn.gamma", self.gamma)
            .set_opt("dqn.epsilon", self.epsilon)
            .set_opt("total_steps", self.steps)
            .set_opt("seeds", self.seeds.clone())
            .set_opt("master_seed", self.master_seed)
            .set_opt("grid_points", self.grid)
            .set_opt("output_dir", self.out.as_ref().map(|p| p.display().to_string()))
            .set_opt("workers", self.workers);
        o
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GridSearchArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ConfirmArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct BufferSweepArgs {
    /// Sweep spec; without it the standard grids for `--env` are used.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<EnvKind>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<RegularizerKind>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub env: EnvKind,
    /// Grid points per state dimension.
    #[arg(long)]
    pub grid: usize,
    /// Directory for metrics.csv and instance_sparsity.csv; defaults to the snapshot's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A trained network with the run that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub method: RegularizerKind,
    pub config_id: String,
    pub seed: u64,
    pub network: QNetwork<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsCsvRow {
    pub method: String,
    pub config_id: String,
    pub seed: u64,
    pub grid_points: usize,
    pub overlap: f64,
    pub live_neurons: usize,
    pub normalized_overlap: f64,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::GridSearch(a) => cmd_grid_search(&a),
        Command::Confirm(a) => cmd_confirm(&a),
        Command::BufferSweep(a) => cmd_buffer_sweep(&a),
        Command::Metrics(a) => cmd_metrics(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

/// Writes `resolved` into `dir/name`. Returns `Ok(false)` when `marker` already
/// exists with the same resolved config, meaning the command can be skipped.
fn prepare_output(dir: &Path, name: &str, resolved: &str, marker: &str, force: bool) -> Result<bool, Failure> {
    let echo = dir.join(name);
    if !force && dir.join(marker).exists() {
        return match fs::read_to_string(&echo) {
            Ok(existing) if existing == resolved => Ok(false),
            _ => Err(Failure::Config(format!(
                "{} holds results for a different configuration; use --force to overwrite",
                dir.display()
            ))),
        };
    }
    fs::create_dir_all(dir)?;
    fs::write(echo, resolved)?;
    Ok(true)
}

fn write_snapshots(dir: &Path, runs: &[RunResult]) -> Outcome {
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    for r in runs {
        let snap = Snapshot {
            method: r.method,
            config_id: r.config_id.clone(),
            seed: r.seed,
            network: r.network.clone(),
        };
        let json = serde_json::to_string(&snap).map_err(|e| Failure::Runtime(e.to_string()))?;
        fs::write(snaps.join(format!("run{}.net", r.seed)), json)?;
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Outcome {
    let cfg = config::load_experiment(a.flags.config.as_deref(), &a.flags.overrides())?;
    let resolved = cfg.resolved();
    let text = resolved.to_toml();
    if a.dry_run {
        print!("{text}");
        return Ok(());
    }
    let dir = cfg.output_dir();
    if !prepare_output(&dir, "resolved_config.toml", &text, "runs.csv", a.force)? {
        println!("{}: outputs up to date", dir.display());
        return Ok(());
    }
    let rc = cfg.run_config();
    let jobs: Vec<(RunConfig, u64)> = cfg.seeds.0.iter().map(|&s| (rc.clone(), s)).collect();
    let results = experiments::run_jobs(&jobs, cfg.master_seed, cfg.workers())?;
    let failed: Vec<String> = results.iter().filter_map(|r| r.as_ref().err().map(|e| e.to_string())).collect();
    let runs: Vec<RunResult> = results.into_iter().filter_map(Result::ok).collect();
    experiments::write_runs_csv(&dir.join("runs.csv"), &runs)?;
    experiments::write_instance_sparsity_csv(&dir.join("instance_sparsity.csv"), &runs)?;
    write_snapshots(&dir, &runs)?;
    for r in &runs {
        println!(
            "seed {:>4}  reward {:>12.1}  overlap {:.4}  live {:>3}  normalized {:.4}",
            r.seed, r.cumulative_reward, r.overlap.overlap, r.overlap.live_neurons, r.overlap.normalized_overlap
        );
    }
    if !failed.is_empty() {
        return Err(Failure::Runtime(format!("{} runs failed: {}", failed.len(), failed.join("; "))));
    }
    Ok(())
}

fn load_spec<C: serde::de::DeserializeOwned>(path: &Path) -> Result<C, Failure> {
    Ok(config::load_with(Some(path), &Overrides::default())?)
}

fn to_toml<C: Serialize>(c: &C) -> Result<String, Failure> {
    toml::to_string(c).map_err(|e| Failure::Runtime(e.to_string()))
}

fn default_dir(kind: &str, id: &str) -> PathBuf {
    config::output_root().join(format!("{kind}-{id}"))
}

fn short_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(text.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn cmd_grid_search(a: &GridSearchArgs) -> Outcome {
    let spec: SweepSpec = load_spec(&a.spec)?;
    spec.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let spec = spec.resolved();
    let text = to_toml(&spec)?;
    if a.dry_run {
        print!("{text}");
        return Ok(());
    }
    let dir = a.out.clone().unwrap_or_else(|| default_dir("grid-search", &short_hash(&text)));
    if !prepare_output(&dir, "resolved_spec.toml", &text, "leaderboard.csv", a.force)? {
        println!("{}: outputs up to date", dir.display());
        return Ok(());
    }
    let outcome = experiments::grid_search(&spec, a.workers.unwrap_or_else(config::default_workers))?;
    experiments::write_runs_csv(&dir.join("runs.csv"), &outcome.runs)?;
    experiments::write_leaderboard_csv(&dir.join("leaderboard.csv"), &outcome.leaderboard)?;
    fs::write(dir.join("best_config.toml"), to_toml(&outcome.best.resolved())?)?;
    for e in outcome.leaderboard.iter().take(5) {
        println!(
            "#{:<3} {}  lr {:<10} avg {:>12.1}  ci_lower {:>12.1}",
            e.rank, e.config_id, e.config.dqn.learning_rate, e.stats.avg, e.stats.ci_lower
        );
    }
    Ok(())
}

fn cmd_confirm(a: &ConfirmArgs) -> Outcome {
    if a.runs == 0 {
        return Err(Failure::Config("`runs` must be positive".into()));
    }
    let cfg = config::load_experiment(a.flags.config.as_deref(), &a.flags.overrides())?;
    let rc = cfg.run_config();
    let mut resolved = cfg.resolved();
    resolved.seeds = config::Seeds(
        (0..a.runs as u64).map(|i| experiments::CONFIRM_SEED_OFFSET + i).collect(),
    );
    if a.flags.out.is_none() && cfg.output_dir.is_none() {
        resolved.output_dir = Some(default_dir("confirm", &rc.fingerprint()));
    }
    let text = resolved.to_toml();
    if a.dry_run {
        print!("{text}");
        return Ok(());
    }
    let dir = resolved.output_dir.clone().expect("resolved output dir");
    if !prepare_output(&dir, "resolved_config.toml", &text, "summary.csv", a.force)? {
        println!("{}: outputs up to date", dir.display());
        return Ok(());
    }
    let out = experiments::confirm(&rc, a.runs, cfg.master_seed, cfg.workers())?;
    experiments::write_runs_csv(&dir.join("runs.csv"), &out.runs)?;
    experiments::write_instance_sparsity_csv(&dir.join("instance_sparsity.csv"), &out.runs)?;
    write_snapshots(&dir, &out.runs)?;
    let method = rc.method().to_string();
    let rows: Vec<SummaryCsvRow> = [
        ("cumulative_reward", out.reward),
        ("overlap", out.overlap),
        ("live_neurons", out.live_neurons),
        ("normalized_overlap", out.normalized_overlap),
    ]
    .iter()
    .filter_map(|(name, s)| s.as_ref().map(|s| SummaryCsvRow::new(&method, &out.config_id, name, s)))
    .collect();
    experiments::write_summary_csv(&dir.join("summary.csv"), &rows)?;
    for r in &rows {
        println!("{:<20} avg {:>12.4}  sd {:>10.4}  me {:>10.4}", r.metric, r.avg, r.sd, r.me);
    }
    Ok(())
}

fn cmd_buffer_sweep(a: &BufferSweepArgs) -> Outcome {
    let mut spec: BufferSweepSpec = match (&a.spec, a.env) {
        (Some(path), _) => load_spec(path)?,
        (None, Some(env)) => {
            let mut template = SweepSpec::standard(RunConfig::new(env, Default::default()), RegularizerKind::None);
            template.target_update_freqs.clear();
            BufferSweepSpec {
                template,
                methods: RegularizerKind::ALL.to_vec(),
                buffer_sizes: vec![100, 1_000, 2_000, 5_000, 20_000, 80_000],
            }
        }
        (None, None) => return Err(Failure::Config("missing field `env` (or pass --spec)".into())),
    };
    if !a.sizes.is_empty() {
        spec.buffer_sizes = a.sizes.clone();
    }
    if !a.methods.is_empty() {
        spec.methods = a.methods.clone();
    }
    if let Some(steps) = a.steps {
        spec.template.base.total_steps = Some(steps);
    }
    for &m in &spec.methods {
        for &size in &spec.buffer_sizes {
            spec.cell(m, size).validate().map_err(|e| Failure::Config(e.to_string()))?;
        }
    }
    let text = to_toml(&spec)?;
    if a.dry_run {
        print!("{text}");
        return Ok(());
    }
    let dir = a.out.clone().unwrap_or_else(|| default_dir("buffer-sweep", &short_hash(&text)));
    if !prepare_output(&dir, "resolved_spec.toml", &text, "buffer_sweep.csv", a.force)? {
        println!("{}: outputs up to date", dir.display());
        return Ok(());
    }
    let rows = experiments::buffer_sweep(&spec, a.workers.unwrap_or_else(config::default_workers))?;
    experiments::write_buffer_sweep_csv(&dir.join("buffer_sweep.csv"), &rows)?;
    for r in &rows {
        if let Some(s) = r.confirm.reward {
            println!("{:<16} {:>6}  avg {:>12.1}  me {:>10.1}", r.method, r.buffer_size, s.avg, s.me);
        }
    }
    Ok(())
}

fn cmd_metrics(a: &MetricsArgs) -> Outcome {
    let text = fs::read_to_string(&a.snapshot)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", a.snapshot.display())))?;
    let snap: Snapshot = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", a.snapshot.display())))?;
    let spec = envs::env_spec(a.env, &EnvConstants::default()).map_err(|e| Failure::Config(e.to_string()))?;
    if spec.state_dim != snap.network.config.input_dim {
        return Err(Failure::Config(format!(
            "snapshot expects {} inputs but {} has {}",
            snap.network.config.input_dim, a.env, spec.state_dim
        )));
    }
    let grid = metrics::build_grid(&spec, &vec![a.grid; spec.state_dim]).map_err(|e| Failure::Config(e.to_string()))?;
    let pattern = ActivityPattern::from_activations(&metrics::representation_on_grid(&snap.network, &grid)?)?;
    let report = OverlapReport::from_pattern(&pattern)?;
    println!("overlap            {:.6}", report.overlap);
    println!("live_neurons       {}", report.live_neurons);
    println!("normalized_overlap {:.6}", report.normalized_overlap);

    let dir = a
        .out
        .clone()
        .or_else(|| a.snapshot.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    append_rows(
        &dir.join("metrics.csv"),
        &[MetricsCsvRow {
            method: snap.method.to_string(),
            config_id: snap.config_id.clone(),
            seed: snap.seed,
            grid_points: a.grid,
            overlap: report.overlap,
            live_neurons: report.live_neurons,
            normalized_overlap: report.normalized_overlap,
        }],
    )?;
    match InstanceSparsity::from_pattern(&pattern) {
        Ok(s) => append_rows(
            &dir.join("instance_sparsity.csv"),
            &InstanceSparsityCsvRow::rows(&snap.config_id, snap.seed, &s.histogram),
        )?,
        Err(MetricsError::NoLiveNeurons) => log::warn!("no live neurons; instance sparsity skipped"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}
