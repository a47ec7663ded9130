//! Fixed-family multilayer perceptron used as the Q-network: ReLU hidden
//! layers forming the learned representation, followed by a linear read-out.
//!
//! Forward passes always cache per-layer pre-activations and activations so
//! that regularizers, backpropagation and the sparsity metrics can read the
//! representation without re-running the network.

mod adam;
pub mod gradcheck;
mod matrix;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("input dimension mismatch: expected {expected}, got {actual}")]
    InputDim { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dropout probability must lie in [0, 1), got {0}")]
    DropoutProbability(f64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub output_bias: bool,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>, output_dim: usize) -> Result<Self, NnError> {
        let cfg = Self {
            input_dim,
            hidden_sizes,
            output_dim,
            output_bias: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.hidden_sizes.is_empty() {
            return Err(NnError::InvalidConfig("hidden_sizes must be non-empty".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(NnError::InvalidConfig("all layer sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// Width of the last hidden layer, i.e. the representation size.
    pub fn representation_dim(&self) -> usize {
        *self.hidden_sizes.last().expect("validated non-empty")
    }

    fn layer_dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.input_dim)
            .chain(self.hidden_sizes.iter().copied())
            .zip(self.hidden_sizes.iter().copied())
    }
}

/// Q-network `q(s, .) = w^T phi_theta(s)`.
///
/// `hidden_weights`/`hidden_biases` are the representation parameters theta;
/// `output_weights` is the linear read-out `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QNetwork<T> {
    pub config: MlpConfig,
    pub hidden_weights: Vec<Matrix<T>>,
    pub hidden_biases: Vec<Vec<T>>,
    pub output_weights: Matrix<T>,
    pub output_bias: Option<Vec<T>>,
}

/// Everything a forward pass computed for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    pub input: Vec<T>,
    pub pre_activations: Vec<Vec<T>>,
    /// Post-ReLU values, before any dropout mask.
    pub activations: Vec<Vec<T>>,
    /// Per hidden layer multiplicative masks (0 or `1/(1-p)`), training mode only.
    pub dropout_masks: Option<Vec<Vec<T>>>,
    pub q_values: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Last hidden layer activations: the representation phi_theta(s).
    pub fn representation(&self) -> &[T] {
        self.activations.last().expect("at least one hidden layer")
    }

    /// What hidden layer `k` passed to the next layer (activation times mask).
    pub fn layer_output(&self, k: usize) -> Vec<T> {
        match &self.dropout_masks {
            Some(masks) => self.activations[k].iter().zip(&masks[k]).map(|(&a, &m)| a * m).collect(),
            None => self.activations[k].clone(),
        }
    }
}

/// Gradient with the same layout as [`QNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub hidden_weights: Vec<Matrix<T>>,
    pub hidden_biases: Vec<Vec<T>>,
    pub output_weights: Matrix<T>,
    pub output_bias: Option<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &QNetwork<T>) -> Self {
        Self {
            hidden_weights: net.hidden_weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            hidden_biases: net.hidden_biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
            output_weights: Matrix::zeros(net.output_weights.rows(), net.output_weights.cols()),
            output_bias: net.output_bias.as_ref().map(|b| vec![T::zero(); b.len()]),
        }
    }

    /// Flat views in canonical parameter order: `W_0, b_0, ..., W_k, b_k, w, [w_bias]`.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.hidden_weights.len() + 2);
        for (w, b) in self.hidden_weights.iter().zip(&self.hidden_biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out.push(self.output_weights.as_slice());
        if let Some(b) = &self.output_bias {
            out.push(b.as_slice());
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.hidden_weights.len() + 2);
        for (w, b) in self.hidden_weights.iter_mut().zip(self.hidden_biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out.push(self.output_weights.as_mut_slice());
        if let Some(b) = &mut self.output_bias {
            out.push(b.as_mut_slice());
        }
        out
    }

    /// `self += other`; shapes must agree.
    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<(), NnError> {
        let theirs = other.slices();
        let mut mine = self.slices_mut();
        if mine.len() != theirs.len() || mine.iter().zip(&theirs).any(|(a, b)| a.len() != b.len()) {
            return Err(NnError::Shape("gradient layouts differ".into()));
        }
        for (a, b) in mine.iter_mut().zip(theirs) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
        Ok(())
    }

    pub fn max_abs(&self) -> T {
        self.slices()
            .into_iter()
            .flat_map(|s| s.iter().copied())
            .fold(T::zero(), |m, g| m.max(g.abs()))
    }
}

impl<T: Scalar> QNetwork<T> {
    /// All-zero network of the given shape.
    pub fn zeros(config: MlpConfig) -> Result<Self, NnError> {
        config.validate()?;
        let hidden_weights = config.layer_dims().map(|(i, o)| Matrix::zeros(i, o)).collect();
        let hidden_biases = config.hidden_sizes.iter().map(|&n| vec![T::zero(); n]).collect();
        let output_weights = Matrix::zeros(config.representation_dim(), config.output_dim);
        let output_bias = config.output_bias.then(|| vec![T::zero(); config.output_dim]);
        Ok(Self {
            config,
            hidden_weights,
            hidden_biases,
            output_weights,
            output_bias,
        })
    }

    /// He initialization: every weight entering a layer with fan-in `n` is
    /// drawn from `N(0, 2/n)`; biases start at zero.
    pub fn init_he(config: MlpConfig, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_he_with(config, &mut rng)
    }

    pub fn init_he_with<R: Rng + ?Sized>(config: MlpConfig, rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::zeros(config)?;
        let fill = |m: &mut Matrix<T>, rng: &mut R| {
            let std = (2.0 / m.rows() as f64).sqrt();
            for w in m.as_mut_slice() {
                let z: f64 = StandardNormal.sample(rng);
                *w = T::lit(z * std);
            }
        };
        for w in &mut net.hidden_weights {
            fill(w, rng);
        }
        fill(&mut net.output_weights, rng);
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn num_actions(&self) -> usize {
        self.config.output_dim
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.hidden_weights.len()
    }

    fn check_input(&self, state: &[T]) -> Result<(), NnError> {
        if state.len() != self.config.input_dim {
            return Err(NnError::InputDim {
                expected: self.config.input_dim,
                actual: state.len(),
            });
        }
        Ok(())
    }

    /// Evaluation-mode forward pass (no dropout).
    pub fn forward(&self, state: &[T]) -> Result<ForwardTrace<T>, NnError> {
        self.check_input(state)?;
        Ok(self.run(state, None))
    }

    /// Training-mode forward pass. With `dropout_p = Some(p)` every hidden
    /// activation is zeroed with probability `p` and survivors are scaled by
    /// `1/(1-p)`, so evaluation mode needs no rescaling.
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        state: &[T],
        dropout_p: Option<f64>,
        rng: &mut R,
    ) -> Result<ForwardTrace<T>, NnError> {
        self.check_input(state)?;
        let Some(p) = dropout_p else {
            return Ok(self.run(state, None));
        };
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::DropoutProbability(p));
        }
        let keep_scale = T::lit(1.0 / (1.0 - p));
        let masks = self
            .config
            .hidden_sizes
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep_scale })
                    .collect()
            })
            .collect();
        Ok(self.run(state, Some(masks)))
    }

    /// Forward pass replaying previously sampled dropout masks.
    pub fn forward_with_masks(&self, state: &[T], masks: Option<Vec<Vec<T>>>) -> Result<ForwardTrace<T>, NnError> {
        self.check_input(state)?;
        if let Some(m) = &masks {
            let ok = m.len() == self.config.hidden_sizes.len()
                && m.iter().zip(&self.config.hidden_sizes).all(|(v, &n)| v.len() == n);
            if !ok {
                return Err(NnError::Shape("dropout mask shape does not match hidden layers".into()));
            }
        }
        Ok(self.run(state, masks))
    }

    /// Q-values only, evaluation mode.
    pub fn q_values(&self, state: &[T]) -> Result<Vec<T>, NnError> {
        self.check_input(state)?;
        let mut x = state.to_vec();
        for (w, b) in self.hidden_weights.iter().zip(&self.hidden_biases) {
            let mut z = vec![T::zero(); w.cols()];
            w.affine_into(&x, Some(b), &mut z);
            z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            x = z;
        }
        let mut q = vec![T::zero(); self.config.output_dim];
        self.output_weights.affine_into(&x, self.output_bias.as_deref(), &mut q);
        Ok(q)
    }

    fn run(&self, state: &[T], masks: Option<Vec<Vec<T>>>) -> ForwardTrace<T> {
        let layers = self.hidden_weights.len();
        let mut pre_activations = Vec::with_capacity(layers);
        let mut activations = Vec::with_capacity(layers);
        let mut x = state.to_vec();
        for k in 0..layers {
            let w = &self.hidden_weights[k];
            let mut z = vec![T::zero(); w.cols()];
            w.affine_into(&x, Some(&self.hidden_biases[k]), &mut z);
            let y: Vec<T> = z.iter().map(|v| v.max(T::zero())).collect();
            x = match &masks {
                Some(m) => y.iter().zip(&m[k]).map(|(&a, &s)| a * s).collect(),
                None => y.clone(),
            };
            pre_activations.push(z);
            activations.push(y);
        }
        let mut q_values = vec![T::zero(); self.config.output_dim];
        self.output_weights.affine_into(&x, self.output_bias.as_deref(), &mut q_values);
        ForwardTrace {
            input: state.to_vec(),
            pre_activations,
            activations,
            dropout_masks: masks,
            q_values,
        }
    }

    /// Backpropagates per-sample loss gradients w.r.t. the q-values (and
    /// optionally w.r.t. the last hidden layer's activations) into parameter
    /// gradients, summed over the batch. Dropout masks stored in the traces
    /// are replayed. Weight penalties are not included here.
    pub fn backward(
        &self,
        traces: &[ForwardTrace<T>],
        dq_values: &[Vec<T>],
        activation_grads: Option<&[Vec<T>]>,
    ) -> Result<Gradients<T>, NnError> {
        if traces.len() != dq_values.len() {
            return Err(NnError::Shape(format!(
                "{} traces but {} q-value gradients",
                traces.len(),
                dq_values.len()
            )));
        }
        if let Some(ag) = activation_grads {
            if ag.len() != traces.len() {
                return Err(NnError::Shape(format!(
                    "{} traces but {} activation gradients",
                    traces.len(),
                    ag.len()
                )));
            }
        }
        let rep_dim = self.config.representation_dim();
        let layers = self.hidden_weights.len();
        let mut grads = Gradients::zeros_like(self);
        let mut upstream: Vec<T> = Vec::new();
        for (b, (trace, dq)) in traces.iter().zip(dq_values).enumerate() {
            if dq.len() != self.config.output_dim || trace.activations.len() != layers {
                return Err(NnError::Shape(format!("sample {b}: trace does not match network")));
            }
            let penalty = match activation_grads {
                Some(ag) if ag[b].len() != rep_dim => {
                    return Err(NnError::Shape(format!("sample {b}: activation gradient has wrong length")));
                }
                Some(ag) => Some(&ag[b]),
                None => None,
            };

            let last_out = trace.layer_output(layers - 1);
            grads.output_weights.add_outer(&last_out, dq);
            if let Some(ob) = &mut grads.output_bias {
                ob.iter_mut().zip(dq).for_each(|(g, &d)| *g += d);
            }
            upstream.clear();
            upstream.resize(rep_dim, T::zero());
            self.output_weights.mul_vec_into(dq, &mut upstream);

            for k in (0..layers).rev() {
                // d loss / d activation (pre-mask), then through the ReLU.
                let mut delta = upstream.clone();
                if let Some(m) = &trace.dropout_masks {
                    delta.iter_mut().zip(&m[k]).for_each(|(d, &s)| *d *= s);
                }
                if k == layers - 1 {
                    if let Some(p) = penalty {
                        delta.iter_mut().zip(p).for_each(|(d, &g)| *d += g);
                    }
                }
                delta
                    .iter_mut()
                    .zip(&trace.pre_activations[k])
                    .for_each(|(d, &z)| {
                        if z <= T::zero() {
                            *d = T::zero();
                        }
                    });
                grads.hidden_biases[k].iter_mut().zip(&delta).for_each(|(g, &d)| *g += d);
                let input = if k == 0 { trace.input.clone() } else { trace.layer_output(k - 1) };
                grads.hidden_weights[k].add_outer(&input, &delta);
                if k > 0 {
                    upstream.clear();
                    upstream.resize(self.hidden_weights[k].rows(), T::zero());
                    self.hidden_weights[k].mul_vec_into(&delta, &mut upstream);
                }
            }
        }
        Ok(grads)
    }

    /// Flat parameter views in the same order as [`Gradients::slices`].
    pub fn param_slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.hidden_weights.len() + 2);
        for (w, b) in self.hidden_weights.iter().zip(&self.hidden_biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out.push(self.output_weights.as_slice());
        if let Some(b) = &self.output_bias {
            out.push(b.as_slice());
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.hidden_weights.len() + 2);
        for (w, b) in self.hidden_weights.iter_mut().zip(self.hidden_biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out.push(self.output_weights.as_mut_slice());
        if let Some(b) = &mut self.output_bias {
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Converts to another scalar type (e.g. `f64` snapshot to `f32`).
    pub fn cast<U: Scalar>(&self) -> QNetwork<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect::<Vec<U>>();
        let conv_m = |m: &Matrix<T>| Matrix::from_vec(m.rows(), m.cols(), conv(m.as_slice()));
        QNetwork {
            config: self.config.clone(),
            hidden_weights: self.hidden_weights.iter().map(conv_m).collect(),
            hidden_biases: self.hidden_biases.iter().map(|b| conv(b)).collect(),
            output_weights: conv_m(&self.output_weights),
            output_bias: self.output_bias.as_ref().map(|b| conv(b)),
        }
    }
}
