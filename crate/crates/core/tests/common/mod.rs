#![allow(dead_code)]

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_dqn::agent::Transition;
use sparse_dqn::metrics::ActivityPattern;
use sparse_dqn::nn::{MlpConfig, QNetwork};
use sparse_dqn::regularizers::{RegularizerKind, RegularizerSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// He-initialized net with small random biases so no parameter sits at zero.
pub fn random_net(seed: u64, input: usize, hidden: &[usize], output: usize) -> QNetwork<f64> {
    let mut r = rng(seed);
    let cfg = MlpConfig::new(input, hidden.to_vec(), output).unwrap();
    let mut net = QNetwork::<f64>::init_he_with(cfg, &mut r).unwrap();
    for b in &mut net.hidden_biases {
        b.iter_mut().for_each(|v| *v = r.random_range(-0.2..0.2));
    }
    net
}

pub fn random_batch(r: &mut impl Rng, n: usize, input: usize, actions: usize) -> Vec<Transition<f64>> {
    (0..n)
        .map(|_| Transition {
            state: (0..input).map(|_| r.random_range(-1.0..1.0)).collect(),
            action: r.random_range(0..actions),
            reward: r.random_range(-1.0..1.0),
            next_state: (0..input).map(|_| r.random_range(-1.0..1.0)).collect(),
            terminal: r.random_bool(0.2),
        })
        .collect()
}

pub fn spec_for(kind: RegularizerKind) -> RegularizerSpec {
    RegularizerSpec {
        kind,
        lambda: 0.05,
        lambda_kl: 0.1,
        beta: 0.1,
        dropout_p: 0.3,
    }
}

fn skl(beta_hat: f64, beta: f64) -> f64 {
    let bh = beta_hat.max(1e-8);
    if bh > beta {
        bh.ln() + beta / bh - beta.ln() - 1.0
    } else {
        0.0
    }
}

/// Regularization term written from the definitions, independent of the library.
pub fn penalty_oracle(spec: &RegularizerSpec, net: &QNetwork<f64>, reps: &[Vec<f64>]) -> f64 {
    let hidden_params = || {
        net.hidden_weights
            .iter()
            .flat_map(|w| w.as_slice().iter().copied())
            .chain(net.hidden_biases.iter().flatten().copied())
    };
    let b = reps.len() as f64;
    let width = reps[0].len();
    match spec.kind {
        RegularizerKind::None | RegularizerKind::Dropout => 0.0,
        RegularizerKind::L1Weights => spec.lambda * hidden_params().map(f64::abs).sum::<f64>(),
        RegularizerKind::L2Weights => spec.lambda * hidden_params().map(|w| w * w).sum::<f64>(),
        RegularizerKind::L1Activations => spec.lambda * reps.iter().flatten().map(|y| y.abs()).sum::<f64>() / b,
        RegularizerKind::L2Activations => spec.lambda * reps.iter().flatten().map(|y| y * y).sum::<f64>() / b,
        RegularizerKind::DrExponential => {
            let mut total = 0.0;
            for j in 0..width {
                let mean = reps.iter().map(|r| r[j]).sum::<f64>() / b;
                total += skl(mean, spec.beta);
            }
            spec.lambda_kl * total
        }
        RegularizerKind::DrGamma => {
            let mean = reps.iter().flatten().sum::<f64>() / (b * width as f64);
            spec.lambda_kl * width as f64 * skl(mean, spec.beta)
        }
    }
}

/// Brute-force activation overlap: mean over vertex pairs of co-active neurons.
pub fn brute_overlap(active: &[Vec<bool>]) -> f64 {
    let v = active.len();
    let mut shared = 0u64;
    for i in 0..v {
        for j in i + 1..v {
            shared += active[i].iter().zip(&active[j]).filter(|(&a, &b)| a && b).count() as u64;
        }
    }
    shared as f64 / (v * (v - 1) / 2) as f64
}

pub fn pattern(active: Vec<Vec<bool>>) -> ActivityPattern {
    let width = active.first().map_or(0, Vec::len);
    ActivityPattern { active, width }
}

/// Counts every value drawn through it.
pub struct CountingRng<R> {
    pub inner: R,
    pub draws: u64,
}

impl<R: RngCore> RngCore for CountingRng<R> {
    fn next_u32(&mut self) -> u32 {
        self.draws += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.draws += 1;
        self.inner.fill_bytes(dest)
    }
}

pub fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!("{} {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
}
