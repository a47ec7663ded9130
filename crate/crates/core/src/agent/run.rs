use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AgentError, DqnAgent, DqnConfig, ReplayBuffer, Transition};
use crate::envs::Environment;
use crate::nn::QNetwork;
use crate::Scalar;

pub const DEFAULT_LOG_INTERVAL: u64 = 1000;

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord<T> {
    pub seed: u64,
    pub total_steps: u64,
    /// Sum of every reward received over the whole run.
    pub cumulative_reward: f64,
    /// Reward summed over consecutive windows of `log_interval` steps (last may be partial).
    pub interval_rewards: Vec<f64>,
    pub log_interval: u64,
    pub episodes_completed: u64,
    pub train_steps: u64,
    pub network: QNetwork<T>,
}

/// Trains a fresh agent for `total_steps` environment steps.
pub fn run_training<T: Scalar>(
    env: &mut dyn Environment,
    config: &DqnConfig,
    total_steps: u64,
    seed: u64,
) -> Result<RunRecord<T>, AgentError> {
    run_training_with(env, config, total_steps, seed, DEFAULT_LOG_INTERVAL, |_| {})
}

/// [`run_training`] with a custom log interval and a callback that sees every
/// stored transition.
///
/// Each environment step is followed by one training step once the buffer
/// holds `learning_starts` transitions. Episodes are only reset on reaching a
/// terminal state.
pub fn run_training_with<T: Scalar, F: FnMut(&Transition<T>)>(
    env: &mut dyn Environment,
    config: &DqnConfig,
    total_steps: u64,
    seed: u64,
    log_interval: u64,
    mut observe: F,
) -> Result<RunRecord<T>, AgentError> {
    config.validate()?;
    let log_interval = log_interval.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = env.spec().clone();
    let mut agent = DqnAgent::<T>::new(config.clone(), spec.state_dim, spec.num_actions, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);

    let to_t = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
    let mut state = to_t(&env.reset(&mut rng));
    let mut cumulative = 0.0;
    let mut window = 0.0;
    let mut interval_rewards = Vec::new();
    let mut episodes = 0;

    for step in 0..total_steps {
        let action = agent.select_action(&state, &mut rng)?;
        let result = env.step(action, &mut rng)?;
        agent.env_steps += 1;
        cumulative += result.reward;
        window += result.reward;

        let next_state = to_t(&result.next_state);
        let transition = Transition {
            state: std::mem::take(&mut state),
            action,
            reward: T::lit(result.reward),
            next_state,
            terminal: result.terminal,
        };
        observe(&transition);
        state = if result.terminal {
            episodes += 1;
            to_t(&env.reset(&mut rng))
        } else {
            transition.next_state.clone()
        };
        buffer.push(transition);

        if buffer.len() >= config.learning_starts {
            agent.train_step(&buffer, &mut rng)?;
        }
        if (step + 1) % log_interval == 0 {
            interval_rewards.push(window);
            window = 0.0;
        }
    }
    if !total_steps.is_multiple_of(log_interval) {
        interval_rewards.push(window);
    }

    Ok(RunRecord {
        seed,
        total_steps,
        cumulative_reward: cumulative,
        interval_rewards,
        log_interval,
        episodes_completed: episodes,
        train_steps: agent.train_steps,
        network: agent.policy_net,
    })
}
