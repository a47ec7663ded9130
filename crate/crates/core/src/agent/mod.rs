//! DQN agent: epsilon-greedy acting, uniform experience replay, a hard-copied
//! target network, and the regularized TD training step.

mod replay;
mod run;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvError;
use crate::nn::{AdamConfig, AdamState, ForwardTrace, Gradients, MlpConfig, NnError, QNetwork};
use crate::regularizers::{self, RegularizerSpec};
use crate::Scalar;

pub use replay::{ReplayBuffer, Transition};
pub use run::{run_training, run_training_with, RunRecord, DEFAULT_LOG_INTERVAL};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("replay buffer holds {have} transitions but training needs {need}")]
    InsufficientData { have: usize, need: usize },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Training steps between hard copies of the policy into the target network.
    pub target_update_freq: usize,
    pub buffer_capacity: usize,
    /// Minimum number of stored transitions before training starts.
    pub learning_starts: usize,
    pub hidden_sizes: Vec<usize>,
    pub regularizer: RegularizerSpec,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            epsilon: 0.1,
            learning_rate: 0.001,
            batch_size: 32,
            target_update_freq: 10,
            buffer_capacity: 5000,
            learning_starts: 32,
            hidden_sizes: vec![32, 256],
            regularizer: RegularizerSpec::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail("epsilon must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return fail("batch_size and buffer_capacity must be positive");
        }
        if self.batch_size > self.buffer_capacity {
            return fail("batch_size must not exceed buffer_capacity");
        }
        if self.target_update_freq == 0 {
            return fail("target_update_freq must be >= 1");
        }
        if self.learning_starts < self.batch_size {
            return fail("learning_starts must be >= batch_size");
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return fail("hidden_sizes must be non-empty and positive");
        }
        self.regularizer.validate().map_err(AgentError::Config)
    }
}

/// Policy network, target network and optimizer state of one run.
#[derive(Clone, Debug)]
pub struct DqnAgent<T> {
    pub config: DqnConfig,
    pub policy_net: QNetwork<T>,
    pub target_net: QNetwork<T>,
    pub adam: AdamState<T>,
    pub env_steps: u64,
    pub train_steps: u64,
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy_action<T: Scalar>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> DqnAgent<T> {
    /// He-initialized policy network with an identical target copy.
    pub fn new<R: Rng + ?Sized>(config: DqnConfig, state_dim: usize, num_actions: usize, rng: &mut R) -> Result<Self, AgentError> {
        config.validate()?;
        let mlp = MlpConfig::new(state_dim, config.hidden_sizes.clone(), num_actions)?;
        let policy_net = QNetwork::init_he_with(mlp, rng)?;
        Ok(Self::from_network(config, policy_net))
    }

    pub fn from_network(config: DqnConfig, policy_net: QNetwork<T>) -> Self {
        let adam = AdamState::new(&policy_net, AdamConfig::with_learning_rate(config.learning_rate));
        Self {
            target_net: policy_net.clone(),
            policy_net,
            adam,
            config,
            env_steps: 0,
            train_steps: 0,
        }
    }

    /// Epsilon-greedy over evaluation-mode q-values of the policy network.
    pub fn select_action<R: Rng + ?Sized>(&self, state: &[T], rng: &mut R) -> Result<usize, AgentError> {
        let explore = rng.random::<f64>() < self.config.epsilon;
        if explore {
            return Ok(rng.random_range(0..self.policy_net.num_actions()));
        }
        Ok(greedy_action(&self.policy_net.q_values(state)?))
    }

    /// `r + gamma * max_a q(s', a; target)` for non-terminal transitions, `r` otherwise.
    /// The target network always runs in evaluation mode.
    pub fn td_target(&self, t: &Transition<T>) -> Result<T, AgentError> {
        if t.terminal {
            return Ok(t.reward);
        }
        let q_next = self.target_net.q_values(&t.next_state)?;
        let best = q_next.iter().copied().fold(T::neg_infinity(), T::max);
        Ok(t.reward + T::lit(self.config.gamma) * best)
    }

    /// Policy-network training-mode traces (dropout masks sampled here) and
    /// the batch loss pieces for an explicit set of transitions.
    pub fn batch_loss<R: Rng + ?Sized>(
        &self,
        batch: &[&Transition<T>],
        rng: &mut R,
    ) -> Result<BatchLoss<T>, AgentError> {
        let targets = batch.iter().map(|t| self.td_target(t)).collect::<Result<Vec<_>, _>>()?;
        let dropout = self.config.regularizer.dropout();
        let traces = batch
            .iter()
            .map(|t| self.policy_net.forward_train(&t.state, dropout, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BatchLoss::new(traces, batch, targets))
    }

    /// Samples a mini-batch, takes one Adam step on the regularized TD loss
    /// and hard-copies the target network every `target_update_freq` steps.
    /// Returns the loss (TD error plus penalty) before the update.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer<T>, rng: &mut R) -> Result<T, AgentError> {
        let need = self.config.learning_starts.max(self.config.batch_size);
        if buffer.len() < need {
            return Err(AgentError::InsufficientData { have: buffer.len(), need });
        }
        let batch = buffer.sample(self.config.batch_size, rng);
        let loss = self.batch_loss(&batch, rng)?;
        let (total, grads) = self.loss_gradients(&loss)?;
        self.adam.step(&mut self.policy_net, &grads)?;

        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.config.target_update_freq as u64) {
            self.target_net = self.policy_net.clone();
        }
        Ok(total)
    }

    /// Regularized loss and its gradient w.r.t. the policy network, holding
    /// the TD targets and any dropout masks in `loss` fixed.
    pub fn loss_gradients(&self, loss: &BatchLoss<T>) -> Result<(T, Gradients<T>), AgentError> {
        let penalty = regularizers::penalty(&self.config.regularizer, &self.policy_net, &loss.traces);
        let mut grads = self.policy_net.backward(
            &loss.traces,
            &loss.dq_values,
            penalty.activation_grads.as_deref(),
        )?;
        if let Some(wg) = &penalty.weight_grads {
            grads.accumulate(wg)?;
        }
        Ok((loss.td_loss + penalty.penalty, grads))
    }
}

/// Mean squared TD error of a batch and its gradient w.r.t. the q-values.
#[derive(Clone, Debug)]
pub struct BatchLoss<T> {
    pub traces: Vec<ForwardTrace<T>>,
    pub targets: Vec<T>,
    pub td_loss: T,
    pub dq_values: Vec<Vec<T>>,
}

impl<T: Scalar> BatchLoss<T> {
    fn new(traces: Vec<ForwardTrace<T>>, batch: &[&Transition<T>], targets: Vec<T>) -> Self {
        let n = T::lit(batch.len() as f64);
        let mut td_loss = T::zero();
        let dq_values = traces
            .iter()
            .zip(batch)
            .zip(&targets)
            .map(|((trace, t), &y)| {
                let err = y - trace.q_values[t.action];
                td_loss += err * err;
                let mut dq = vec![T::zero(); trace.q_values.len()];
                dq[t.action] = -T::lit(2.0) * err / n;
                dq
            })
            .collect();
        Self {
            traces,
            targets,
            td_loss: td_loss / n,
            dq_values,
        }
    }
}
