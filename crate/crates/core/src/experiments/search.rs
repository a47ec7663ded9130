use serde::{Deserialize, Serialize};

use super::{run_jobs, summarize, ExperimentError, RunConfig, RunResult, SummaryStats};
use crate::envs::EnvKind;
use crate::regularizers::RegularizerKind;

/// Confirmation runs use seeds `CONFIRM_SEED_OFFSET..`, disjoint from search seeds `0..samples`.
pub const CONFIRM_SEED_OFFSET: u64 = 1000;

pub fn default_learning_rates(env: EnvKind) -> Vec<f64> {
    match env {
        EnvKind::MountainCar | EnvKind::Chain => vec![0.01, 0.004, 0.001, 0.00025],
        EnvKind::Catcher => vec![0.001, 0.0005, 0.00025, 0.000125, 0.0000625, 0.00003125, 0.000015625],
    }
}

pub const DEFAULT_BUFFER_SIZES: [usize; 5] = [100, 1_000, 5_000, 20_000, 80_000];
pub const DEFAULT_TARGET_FREQS: [usize; 5] = [10, 50, 100, 200, 400];
pub const DEFAULT_DROPOUT_PS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_BETAS: [f64; 3] = [0.1, 0.2, 0.5];
pub const DEFAULT_LAMBDA_KLS: [f64; 3] = [0.1, 0.01, 0.001];
pub const DEFAULT_LAMBDAS: [f64; 7] = [0.1, 0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001];

/// Grid-search specification. Empty grids are filled with the standard
/// values for the method and environment by [`SweepSpec::resolved`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub method: RegularizerKind,
    #[serde(default)]
    pub learning_rates: Vec<f64>,
    /// Swept only for the unregularized baseline; other methods reuse `base`.
    #[serde(default)]
    pub buffer_sizes: Vec<usize>,
    #[serde(default)]
    pub target_update_freqs: Vec<usize>,
    #[serde(default)]
    pub dropout_ps: Vec<f64>,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub lambda_kls: Vec<f64>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples_per_combo: usize,
    #[serde(default = "default_confirm_runs")]
    pub confirm_runs: usize,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_samples() -> usize {
    30
}

fn default_confirm_runs() -> usize {
    10
}

impl SweepSpec {
    /// Standard grids for `method` on top of `base`.
    pub fn standard(base: RunConfig, method: RegularizerKind) -> Self {
        Self {
            base,
            method,
            learning_rates: vec![],
            buffer_sizes: vec![],
            target_update_freqs: vec![],
            dropout_ps: vec![],
            betas: vec![],
            lambda_kls: vec![],
            lambdas: vec![],
            samples_per_combo: default_samples(),
            confirm_runs: default_confirm_runs(),
            master_seed: 0,
        }
        .resolved()
    }

    pub fn resolved(&self) -> Self {
        let mut s = self.clone();
        let fill_f = |v: &mut Vec<f64>, d: &[f64]| {
            if v.is_empty() {
                *v = d.to_vec();
            }
        };
        fill_f(&mut s.learning_rates, &default_learning_rates(s.base.env));
        let baseline = s.method == RegularizerKind::None;
        if s.buffer_sizes.is_empty() {
            s.buffer_sizes = if baseline { DEFAULT_BUFFER_SIZES.to_vec() } else { vec![s.base.dqn.buffer_capacity] };
        }
        if s.target_update_freqs.is_empty() {
            s.target_update_freqs = if baseline {
                DEFAULT_TARGET_FREQS.to_vec()
            } else {
                vec![s.base.dqn.target_update_freq]
            };
        }
        fill_f(&mut s.dropout_ps, &DEFAULT_DROPOUT_PS);
        fill_f(&mut s.betas, &DEFAULT_BETAS);
        fill_f(&mut s.lambda_kls, &DEFAULT_LAMBDA_KLS);
        fill_f(&mut s.lambdas, &DEFAULT_LAMBDAS);
        s
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let s = self.resolved();
        let bad = |m: &str| Err(ExperimentError::Spec(m.to_string()));
        if s.samples_per_combo < 2 {
            return bad("samples_per_combo must be >= 2 to form a confidence interval");
        }
        if s.method != RegularizerKind::None && (s.buffer_sizes.len() > 1 || s.target_update_freqs.len() > 1) {
            return bad("buffer_sizes and target_update_freqs are swept only for method `none`");
        }
        s.base.validate()?;
        for cfg in s.combinations() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Every parameter combination, in lexicographic order of
    /// (learning rate, buffer, target frequency, method parameters).
    pub fn combinations(&self) -> Vec<RunConfig> {
        let s = self.resolved();
        let mut out = Vec::new();
        for &lr in &s.learning_rates {
            for &buffer in &s.buffer_sizes {
                for &freq in &s.target_update_freqs {
                    let mut cfg = s.base.clone();
                    cfg.dqn.learning_rate = lr;
                    cfg.dqn.buffer_capacity = buffer;
                    cfg.dqn.target_update_freq = freq;
                    cfg.dqn.regularizer.kind = s.method;
                    out.extend(s.method_variants(cfg));
                }
            }
        }
        out
    }

    fn method_variants(&self, cfg: RunConfig) -> Vec<RunConfig> {
        let with = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = cfg.clone();
            f(&mut c);
            c
        };
        match self.method {
            RegularizerKind::None => vec![cfg.clone()],
            RegularizerKind::Dropout => self
                .dropout_ps
                .iter()
                .map(|&p| with(&|c| c.dqn.regularizer.dropout_p = p))
                .collect(),
            RegularizerKind::DrExponential | RegularizerKind::DrGamma => self
                .betas
                .iter()
                .flat_map(|&b| {
                    self.lambda_kls.iter().map(move |&l| (b, l))
                })
                .map(|(b, l)| {
                    with(&|c| {
                        c.dqn.regularizer.beta = b;
                        c.dqn.regularizer.lambda_kl = l;
                    })
                })
                .collect(),
            _ => self
                .lambdas
                .iter()
                .map(|&l| with(&|c| c.dqn.regularizer.lambda = l))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeaderboardEntry {
    pub rank: usize,
    /// Position in [`SweepSpec::combinations`].
    pub combo_index: usize,
    pub config: RunConfig,
    pub config_id: String,
    pub stats: SummaryStats,
    pub failed_runs: usize,
}

/// Orders by highest CI lower bound, then highest mean, then combination
/// order, and assigns 1-based ranks.
pub fn rank_leaderboard(mut entries: Vec<LeaderboardEntry>) -> Vec<LeaderboardEntry> {
    entries.sort_by(|a, b| {
        b.stats
            .ci_lower
            .total_cmp(&a.stats.ci_lower)
            .then_with(|| b.stats.avg.total_cmp(&a.stats.avg))
            .then_with(|| a.combo_index.cmp(&b.combo_index))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    entries
}

#[derive(Clone, Debug)]
pub struct GridSearchOutcome {
    pub best: RunConfig,
    pub leaderboard: Vec<LeaderboardEntry>,
    /// Successful runs of every combination, in combination then seed order.
    pub runs: Vec<RunResult>,
}

/// Runs `samples_per_combo` seeds (0..samples) of every combination and
/// selects the one with the highest lower 95% confidence bound on
/// cumulative reward. Combinations with a failed run are excluded.
pub fn grid_search(spec: &SweepSpec, workers: usize) -> Result<GridSearchOutcome, ExperimentError> {
    spec.validate()?;
    let spec = spec.resolved();
    let combos = spec.combinations();
    let jobs: Vec<(RunConfig, u64)> = combos
        .iter()
        .flat_map(|c| (0..spec.samples_per_combo as u64).map(move |s| (c.clone(), s)))
        .collect();
    let results = run_jobs(&jobs, spec.master_seed, workers)?;

    let mut entries = Vec::new();
    let mut runs = Vec::new();
    for (combo_index, (config, chunk)) in combos.iter().zip(results.chunks(spec.samples_per_combo)).enumerate() {
        let failed_runs = chunk.iter().filter(|r| r.is_err()).count();
        if failed_runs > 0 {
            log::error!("combination {combo_index} excluded: {failed_runs} failed runs");
            continue;
        }
        let ok: Vec<&RunResult> = chunk.iter().filter_map(|r| r.as_ref().ok()).collect();
        let rewards: Vec<f64> = ok.iter().map(|r| r.cumulative_reward).collect();
        let stats = summarize(&rewards)?;
        entries.push(LeaderboardEntry {
            rank: 0,
            combo_index,
            config_id: config.fingerprint(),
            config: config.clone(),
            stats,
            failed_runs,
        });
        runs.extend(ok.into_iter().cloned());
    }
    let leaderboard = rank_leaderboard(entries);
    let best = leaderboard
        .first()
        .ok_or(ExperimentError::NoSuccessfulConfig)?
        .config
        .clone();
    Ok(GridSearchOutcome { best, leaderboard, runs })
}

#[derive(Clone, Debug)]
pub struct ConfirmOutcome {
    pub config_id: String,
    /// `None` for fewer than two runs.
    pub reward: Option<SummaryStats>,
    pub overlap: Option<SummaryStats>,
    pub live_neurons: Option<SummaryStats>,
    pub normalized_overlap: Option<SummaryStats>,
    pub runs: Vec<RunResult>,
}

/// Reruns `config` on fresh seeds `CONFIRM_SEED_OFFSET..+runs` and summarizes
/// reward and sparsity metrics.
pub fn confirm(config: &RunConfig, runs: usize, master_seed: u64, workers: usize) -> Result<ConfirmOutcome, ExperimentError> {
    config.validate()?;
    let jobs: Vec<(RunConfig, u64)> = (0..runs as u64).map(|i| (config.clone(), CONFIRM_SEED_OFFSET + i)).collect();
    let runs = run_jobs(&jobs, master_seed, workers)?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let stat = |f: &dyn Fn(&RunResult) -> f64| -> Option<SummaryStats> {
        let xs: Vec<f64> = runs.iter().map(f).collect();
        summarize(&xs).ok()
    };
    Ok(ConfirmOutcome {
        config_id: config.fingerprint(),
        reward: stat(&|r| r.cumulative_reward),
        overlap: stat(&|r| r.overlap.overlap),
        live_neurons: stat(&|r| r.overlap.live_neurons as f64),
        normalized_overlap: stat(&|r| r.overlap.normalized_overlap),
        runs,
    })
}

/// Per-method, per-buffer-size protocol: each (method, size) cell is
/// searched with the buffer fixed to that size and the template's target
/// frequency, then confirmed on fresh seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSweepSpec {
    pub template: SweepSpec,
    pub methods: Vec<RegularizerKind>,
    pub buffer_sizes: Vec<usize>,
}

impl BufferSweepSpec {
    /// Search spec for one cell of the sweep.
    pub fn cell(&self, method: RegularizerKind, buffer_size: usize) -> SweepSpec {
        let mut s = self.template.clone();
        s.method = method;
        s.buffer_sizes = vec![buffer_size];
        s.base.dqn.buffer_capacity = buffer_size;
        if s.target_update_freqs.is_empty() {
            s.target_update_freqs = vec![s.base.dqn.target_update_freq];
        }
        s.resolved()
    }
}

#[derive(Clone, Debug)]
pub struct BufferSweepRow {
    pub method: RegularizerKind,
    pub buffer_size: usize,
    pub config: RunConfig,
    pub config_id: String,
    pub confirm: ConfirmOutcome,
}

impl BufferSweepRow {
    /// Range of the per-size mean rewards across `rows` of one method.
    pub fn spread(rows: &[&BufferSweepRow]) -> Option<f64> {
        let means: Vec<f64> = rows.iter().filter_map(|r| r.confirm.reward.map(|s| s.avg)).collect();
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        (!means.is_empty()).then_some(max - min)
    }
}

pub fn buffer_sweep(spec: &BufferSweepSpec, workers: usize) -> Result<Vec<BufferSweepRow>, ExperimentError> {
    if spec.methods.is_empty() || spec.buffer_sizes.is_empty() {
        return Err(ExperimentError::Spec("buffer sweep needs at least one method and one size".into()));
    }
    let mut rows = Vec::new();
    for &method in &spec.methods {
        for &size in &spec.buffer_sizes {
            let cell = spec.cell(method, size);
            let combos = cell.combinations();
            let config = if combos.len() == 1 {
                combos.into_iter().next().expect("one combination")
            } else {
                grid_search(&cell, workers)?.best
            };
            let confirm = confirm(&config, cell.confirm_runs, cell.master_seed, workers)?;
            rows.push(BufferSweepRow {
                method,
                buffer_size: size,
                config_id: config.fingerprint(),
                config,
                confirm,
            });
        }
    }
    Ok(rows)
}
