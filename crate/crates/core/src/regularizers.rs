//! Sparsity-inducing penalties added to the TD loss.
//!
//! Weight norms act on the representation parameters (hidden weights and
//! biases, never the read-out). Activation norms and the distributional
//! penalties act on the last hidden layer only and are averaged over the
//! batch. Dropout is handled in the forward pass and contributes no penalty.

use serde::{Deserialize, Serialize};

use crate::nn::{ForwardTrace, Gradients, QNetwork};
use crate::Scalar;

/// Lower bound for estimated activation means; keeps `ln` and `1/x` finite.
pub const BETA_HAT_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    L1Weights,
    L2Weights,
    L1Activations,
    L2Activations,
    DrExponential,
    DrGamma,
    Dropout,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 8] = [
        RegularizerKind::None,
        RegularizerKind::L1Weights,
        RegularizerKind::L2Weights,
        RegularizerKind::L1Activations,
        RegularizerKind::L2Activations,
        RegularizerKind::DrExponential,
        RegularizerKind::DrGamma,
        RegularizerKind::Dropout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::L1Weights => "l1_weights",
            RegularizerKind::L2Weights => "l2_weights",
            RegularizerKind::L1Activations => "l1_activations",
            RegularizerKind::L2Activations => "l2_activations",
            RegularizerKind::DrExponential => "dr_exponential",
            RegularizerKind::DrGamma => "dr_gamma",
            RegularizerKind::Dropout => "dropout",
        }
    }
}

impl std::fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RegularizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RegularizerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = RegularizerKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown method `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

/// Which penalty is active and its coefficients. Only the fields relevant to
/// `kind` are read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub lambda: f64,
    pub lambda_kl: f64,
    pub beta: f64,
    pub dropout_p: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        Self {
            kind: RegularizerKind::None,
            lambda: 0.0,
            lambda_kl: 0.0,
            beta: 0.1,
            dropout_p: 0.0,
        }
    }
}

impl RegularizerSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_kind(kind: RegularizerKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(msg.to_string()) };
        match self.kind {
            RegularizerKind::None => Ok(()),
            RegularizerKind::L1Weights
            | RegularizerKind::L2Weights
            | RegularizerKind::L1Activations
            | RegularizerKind::L2Activations => check(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be >= 0"),
            RegularizerKind::DrExponential | RegularizerKind::DrGamma => {
                check(self.lambda_kl >= 0.0 && self.lambda_kl.is_finite(), "lambda_kl must be >= 0")?;
                check(self.beta > 0.0 && self.beta.is_finite(), "beta must be > 0")
            }
            RegularizerKind::Dropout => check((0.0..1.0).contains(&self.dropout_p), "dropout_p must lie in [0, 1)"),
        }
    }

    /// Dropout probability to use for training-mode forward passes.
    pub fn dropout(&self) -> Option<f64> {
        (self.kind == RegularizerKind::Dropout).then_some(self.dropout_p)
    }
}

/// A penalty value and its gradient, either w.r.t. representation
/// parameters or w.r.t. per-sample last-layer activations.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyResult<T> {
    pub penalty: T,
    /// Same layout as the network; the read-out entries are always zero.
    pub weight_grads: Option<Gradients<T>>,
    pub activation_grads: Option<Vec<Vec<T>>>,
}

impl<T: Scalar> PenaltyResult<T> {
    pub fn zero() -> Self {
        Self {
            penalty: T::zero(),
            weight_grads: None,
            activation_grads: None,
        }
    }
}

#[inline]
fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `lambda * ||theta||_1` or `lambda * ||theta||_2^2` over all hidden-layer
/// weights and biases.
pub fn weight_penalty<T: Scalar>(net: &QNetwork<T>, norm: Norm, lambda: T) -> PenaltyResult<T> {
    let mut grads = Gradients::zeros_like(net);
    let mut total = T::zero();
    let two = T::lit(2.0);
    let layers = net.hidden_weights.len();
    for k in 0..layers {
        let params = [net.hidden_weights[k].as_slice(), net.hidden_biases[k].as_slice()];
        let (gw, gb) = (&mut grads.hidden_weights[k], &mut grads.hidden_biases[k]);
        let targets: [&mut [T]; 2] = [gw.as_mut_slice(), gb.as_mut_slice()];
        for (p, g) in params.into_iter().zip(targets) {
            for (&x, gx) in p.iter().zip(g.iter_mut()) {
                match norm {
                    Norm::L1 => {
                        total += x.abs();
                        *gx = lambda * sign(x);
                    }
                    Norm::L2 => {
                        total += x * x;
                        *gx = two * lambda * x;
                    }
                }
            }
        }
    }
    PenaltyResult {
        penalty: lambda * total,
        weight_grads: Some(grads),
        activation_grads: None,
    }
}

/// Batch mean of `lambda * ||y||_1` (or `||y||_2^2`) over rows of
/// last-layer activations.
pub fn activation_penalty<T: Scalar, R: AsRef<[T]>>(rows: &[R], norm: Norm, lambda: T) -> PenaltyResult<T> {
    let batch = T::lit(rows.len().max(1) as f64);
    let two = T::lit(2.0);
    let mut total = T::zero();
    let grads = rows
        .iter()
        .map(|row| {
            row.as_ref()
                .iter()
                .map(|&y| match norm {
                    Norm::L1 => {
                        total += y.abs();
                        lambda * sign(y) / batch
                    }
                    Norm::L2 => {
                        total += y * y;
                        two * lambda * y / batch
                    }
                })
                .collect()
        })
        .collect();
    PenaltyResult {
        penalty: lambda * total / batch,
        weight_grads: None,
        activation_grads: Some(grads),
    }
}

/// Set-KL divergence from exponentials with mean in `(0, beta]` to an
/// exponential with mean `beta_hat`.
pub fn skl_exponential<T: Scalar>(beta_hat: T, beta: T) -> T {
    if beta_hat > beta {
        beta_hat.ln() + beta / beta_hat - beta.ln() - T::one()
    } else {
        T::zero()
    }
}

/// `d skl / d beta_hat`.
fn skl_exponential_slope<T: Scalar>(beta_hat: T, beta: T) -> T {
    if beta_hat > beta {
        T::one() / beta_hat - beta / (beta_hat * beta_hat)
    } else {
        T::zero()
    }
}

fn floored_mean<T: Scalar>(sum: T, count: usize) -> T {
    (sum / T::lit(count as f64)).max(T::lit(BETA_HAT_FLOOR))
}

/// Per-neuron exponential distributional penalty: each neuron's batch-mean
/// activation is pulled into `(0, beta]`.
pub fn dr_e_penalty<T: Scalar, R: AsRef<[T]>>(rows: &[R], lambda_kl: T, beta: T) -> PenaltyResult<T> {
    let Some(width) = rows.first().map(|r| r.as_ref().len()) else {
        return PenaltyResult::zero();
    };
    let batch = rows.len();
    let mut sums = vec![T::zero(); width];
    for row in rows {
        sums.iter_mut().zip(row.as_ref()).for_each(|(s, &y)| *s += y);
    }
    let mut penalty = T::zero();
    let per_neuron: Vec<T> = sums
        .iter()
        .map(|&s| {
            let beta_hat = floored_mean(s, batch);
            penalty += skl_exponential(beta_hat, beta);
            lambda_kl * skl_exponential_slope(beta_hat, beta) / T::lit(batch as f64)
        })
        .collect();
    PenaltyResult {
        penalty: lambda_kl * penalty,
        weight_grads: None,
        activation_grads: Some(vec![per_neuron; batch]),
    }
}

/// Layer-level (gamma) distributional penalty: the mean over the whole
/// layer and batch is pulled into `(0, beta]`, scaled by the layer width.
pub fn dr_g_penalty<T: Scalar, R: AsRef<[T]>>(rows: &[R], lambda_kl: T, beta: T) -> PenaltyResult<T> {
    let Some(width) = rows.first().map(|r| r.as_ref().len()) else {
        return PenaltyResult::zero();
    };
    let batch = rows.len();
    let total: T = rows
        .iter()
        .flat_map(|r| r.as_ref().iter().copied())
        .fold(T::zero(), |a, b| a + b);
    let beta_hat = floored_mean(total, width * batch);
    let n = T::lit(width as f64);
    let penalty = lambda_kl * n * skl_exponential(beta_hat, beta);
    let g = lambda_kl * n * skl_exponential_slope(beta_hat, beta) / T::lit((width * batch) as f64);
    PenaltyResult {
        penalty,
        weight_grads: None,
        activation_grads: Some(vec![vec![g; width]; batch]),
    }
}

/// Penalty for `spec` given the network and the policy-network traces of
/// the current mini-batch.
pub fn penalty<T: Scalar>(spec: &RegularizerSpec, net: &QNetwork<T>, traces: &[ForwardTrace<T>]) -> PenaltyResult<T> {
    let rows = || traces.iter().map(|t| t.representation()).collect::<Vec<&[T]>>();
    let lambda = T::lit(spec.lambda);
    match spec.kind {
        RegularizerKind::None | RegularizerKind::Dropout => PenaltyResult::zero(),
        RegularizerKind::L1Weights => weight_penalty(net, Norm::L1, lambda),
        RegularizerKind::L2Weights => weight_penalty(net, Norm::L2, lambda),
        RegularizerKind::L1Activations => activation_penalty(&rows(), Norm::L1, lambda),
        RegularizerKind::L2Activations => activation_penalty(&rows(), Norm::L2, lambda),
        RegularizerKind::DrExponential => dr_e_penalty(&rows(), T::lit(spec.lambda_kl), T::lit(spec.beta)),
        RegularizerKind::DrGamma => dr_g_penalty(&rows(), T::lit(spec.lambda_kl), T::lit(spec.beta)),
    }
}
