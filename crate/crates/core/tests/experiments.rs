use std::collections::BTreeMap;

use sparse_dqn::agent::DqnConfig;
use sparse_dqn::envs::EnvKind;
use sparse_dqn::experiments::{
    buffer_sweep, grid_search, read_rows, read_runs_csv, summarize, write_buffer_sweep_csv, write_instance_sparsity_csv,
    write_leaderboard_csv, write_runs_csv, BufferSweepCsvRow, BufferSweepSpec, InstanceSparsityCsvRow, LeaderboardCsvRow,
    RunConfig, SweepSpec,
};
use sparse_dqn::metrics::INSTANCE_SPARSITY_BINS;
use sparse_dqn::regularizers::RegularizerKind;

fn tiny_base() -> RunConfig {
    let dqn = DqnConfig {
        hidden_sizes: vec![4, 12],
        buffer_capacity: 200,
        ..DqnConfig::default()
    };
    RunConfig {
        total_steps: Some(250),
        grid_points: Some(4),
        ..RunConfig::new(EnvKind::Catcher, dqn)
    }
}

fn tiny_spec(method: RegularizerKind) -> SweepSpec {
    let mut s = SweepSpec::standard(tiny_base(), method);
    s.learning_rates = vec![0.01, 0.001];
    s.lambdas = vec![0.1, 0.001];
    s.samples_per_combo = 4;
    s.confirm_runs = 3;
    s.master_seed = 3;
    s
}

#[test]
fn selection_matches_recomputed_lower_bounds() {
    let spec = tiny_spec(RegularizerKind::L1Activations);
    let outcome = grid_search(&spec, 1).unwrap();
    let combos = spec.combinations();
    assert_eq!(outcome.leaderboard.len(), combos.len());
    assert_eq!(outcome.runs.len(), combos.len() * 4);

    // Independent recomputation: group raw rewards by config, take mean - t*sd/sqrt(n).
    let mut by_config: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &outcome.runs {
        by_config.entry(r.config_id.clone()).or_default().push(r.cumulative_reward);
    }
    let t = 3.182_446_305_284_263; // 97.5% Student-t quantile, 3 degrees of freedom.
    let lower = |xs: &Vec<f64>| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (m - t * sd / n.sqrt(), m)
    };
    let mut best: Option<(f64, f64, usize)> = None;
    for (i, c) in combos.iter().enumerate() {
        let (lb, m) = lower(&by_config[&c.fingerprint()]);
        let better = match best {
            None => true,
            Some((blb, bm, _)) => lb > blb + 1e-9 || ((lb - blb).abs() <= 1e-9 && m > bm),
        };
        if better {
            best = Some((lb, m, i));
        }
    }
    let (lb, _, idx) = best.unwrap();
    assert_eq!(outcome.best, combos[idx]);
    assert!((outcome.leaderboard[0].stats.ci_lower - lb).abs() < 1e-9);
    assert!(outcome.leaderboard.windows(2).all(|w| w[0].stats.ci_lower >= w[1].stats.ci_lower));
}

#[test]
fn leaderboard_recomputable_from_runs_csv() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = grid_search(&tiny_spec(RegularizerKind::DrGamma).resolved_with_small_grid(), 1).unwrap();
    write_runs_csv(&dir.path().join("runs.csv"), &outcome.runs).unwrap();
    write_leaderboard_csv(&dir.path().join("leaderboard.csv"), &outcome.leaderboard).unwrap();
    let runs = read_runs_csv(&dir.path().join("runs.csv")).unwrap();
    let board: Vec<LeaderboardCsvRow> = read_rows(&dir.path().join("leaderboard.csv")).unwrap();
    for row in &board {
        let rewards: Vec<f64> = runs.iter().filter(|r| r.config_id == row.config_id).map(|r| r.cumulative_reward).collect();
        let s = summarize(&rewards).unwrap();
        assert_eq!((s.n, s.avg, s.sd, s.me, s.ci_lower, s.ci_upper), (row.n, row.avg, row.sd, row.me, row.ci_lower, row.ci_upper));
        assert_eq!(row.method, "dr_gamma");
    }
    assert_eq!(board.iter().map(|r| r.rank).collect::<Vec<_>>(), (1..=board.len()).collect::<Vec<_>>());
}

trait SmallGrid {
    fn resolved_with_small_grid(self) -> Self;
}

impl SmallGrid for SweepSpec {
    fn resolved_with_small_grid(mut self) -> Self {
        self.betas = vec![0.1];
        self.lambda_kls = vec![0.1, 0.01];
        self.learning_rates = vec![0.001];
        self
    }
}

#[test]
fn instance_sparsity_rows_cover_every_bin() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec(RegularizerKind::None);
    spec.buffer_sizes = vec![200];
    spec.target_update_freqs = vec![10];
    spec.learning_rates = vec![0.001];
    let outcome = grid_search(&spec, 1).unwrap();
    let path = dir.path().join("instance_sparsity.csv");
    write_instance_sparsity_csv(&path, &outcome.runs).unwrap();
    let rows: Vec<InstanceSparsityCsvRow> = read_rows(&path).unwrap();
    let with_hist = outcome.runs.iter().filter(|r| r.instance_histogram.is_some()).count();
    assert_eq!(rows.len(), with_hist * INSTANCE_SPARSITY_BINS);
    for run in outcome.runs.iter().filter(|r| r.instance_histogram.is_some()) {
        let mine: Vec<&InstanceSparsityCsvRow> = rows.iter().filter(|r| r.seed == run.seed).collect();
        assert_eq!(mine.iter().map(|r| r.count).sum::<u64>(), 4u64.pow(4));
        for (k, r) in mine.iter().enumerate() {
            assert_eq!(r.bin_left, k as f64 / INSTANCE_SPARSITY_BINS as f64);
        }
    }
}

#[test]
fn buffer_sweep_emits_method_by_size_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut template = tiny_spec(RegularizerKind::None);
    template.learning_rates = vec![0.001];
    template.lambdas = vec![0.01];
    template.target_update_freqs = vec![];
    let spec = BufferSweepSpec {
        template,
        methods: vec![RegularizerKind::None, RegularizerKind::L2Activations],
        buffer_sizes: vec![50, 200],
    };
    let rows = buffer_sweep(&spec, 1).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r.config.dqn.buffer_capacity, r.buffer_size);
        assert_eq!(r.config.dqn.target_update_freq, 10);
        assert!(r.confirm.runs.iter().all(|run| run.seed >= 1000));
    }
    let path = dir.path().join("buffer_sweep.csv");
    write_buffer_sweep_csv(&path, &rows).unwrap();
    let back: Vec<BufferSweepCsvRow> = read_rows(&path).unwrap();
    assert_eq!(back.iter().map(|r| (r.method.as_str(), r.buffer_size)).collect::<Vec<_>>(), vec![
        ("none", 50),
        ("none", 200),
        ("l2_activations", 50),
        ("l2_activations", 200)
    ]);
    assert!(back.iter().all(|r| r.n == 3 && (r.ci_upper - r.ci_lower - 2.0 * r.me).abs() < 1e-9));
}
