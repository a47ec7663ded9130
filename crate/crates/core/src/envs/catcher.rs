use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{EnvError, EnvSpec, Environment, StepResult};

/// Arcade catcher constants. Lengths are in field units, speeds in units per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatcherConfig {
    pub width: f64,
    pub height: f64,
    pub paddle_width: f64,
    pub fruit_size: f64,
    pub fruit_speed: f64,
    pub paddle_accel: f64,
    pub velocity_damping: f64,
    pub catch_reward: f64,
    pub miss_reward: f64,
}

impl Default for CatcherConfig {
    fn default() -> Self {
        Self {
            width: 64.0,
            height: 64.0,
            paddle_width: 16.0,
            fruit_size: 4.0,
            fruit_speed: 1.5,
            paddle_accel: 1.5,
            velocity_damping: 0.9,
            catch_reward: 1.0,
            miss_reward: -1.0,
        }
    }
}

impl CatcherConfig {
    /// Terminal paddle speed under constant acceleration.
    pub fn max_paddle_speed(&self) -> f64 {
        self.paddle_accel / (1.0 - self.velocity_damping)
    }

    /// Steps from a fresh spawn at the top until the fruit reaches the paddle row.
    pub fn fall_duration(&self) -> usize {
        (self.height / self.fruit_speed).ceil() as usize
    }

    fn paddle_range(&self) -> (f64, f64) {
        (self.paddle_width / 2.0, self.width - self.paddle_width / 2.0)
    }

    fn fruit_range(&self) -> (f64, f64) {
        (self.fruit_size / 2.0, self.width - self.fruit_size / 2.0)
    }
}

/// Raw catcher state; `fruit_y` grows downward from 0 (top) to `height` (paddle row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CatcherState {
    pub paddle_x: f64,
    pub paddle_velocity: f64,
    pub fruit_x: f64,
    pub fruit_y: f64,
}

/// Continuing catcher: no lives, a new fruit spawns as soon as the previous
/// one is caught or missed, and the episode never terminates.
pub struct Catcher {
    config: CatcherConfig,
    spec: EnvSpec,
    state: CatcherState,
}

impl Catcher {
    pub fn new(config: CatcherConfig) -> Result<Self, EnvError> {
        let valid = config.width > config.paddle_width
            && config.width > config.fruit_size
            && config.height > 0.0
            && config.fruit_speed > 0.0
            && (0.0..1.0).contains(&config.velocity_damping)
            && config.paddle_accel > 0.0;
        if !valid {
            return Err(EnvError::InvalidConfig("catcher constants".into()));
        }
        let (plo, phi) = config.paddle_range();
        let (flo, fhi) = config.fruit_range();
        let vmax = config.max_paddle_speed();
        let spec = EnvSpec {
            name: "catcher".into(),
            state_dim: 4,
            num_actions: 3,
            state_lower_bounds: vec![plo, -vmax, flo, 0.0],
            state_upper_bounds: vec![phi, vmax, fhi, config.height],
        };
        let state = CatcherState {
            paddle_x: config.width / 2.0,
            paddle_velocity: 0.0,
            fruit_x: config.width / 2.0,
            fruit_y: 0.0,
        };
        Ok(Self { config, spec, state })
    }

    pub fn config(&self) -> &CatcherConfig {
        &self.config
    }

    pub fn raw_state(&self) -> CatcherState {
        self.state
    }

    pub fn set_raw_state(&mut self, state: CatcherState) {
        self.state = state;
    }

    fn spawn_fruit(&mut self, rng: &mut dyn RngCore) {
        let (lo, hi) = self.config.fruit_range();
        self.state.fruit_x = rng.random_range(lo..=hi);
        self.state.fruit_y = 0.0;
    }

    fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        self.spec.normalize(&[s.paddle_x, s.paddle_velocity, s.fruit_x, s.fruit_y])
    }
}

impl Environment for Catcher {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.state.paddle_x = self.config.width / 2.0;
        self.state.paddle_velocity = 0.0;
        self.spawn_fruit(rng);
        self.observe()
    }

    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<StepResult, EnvError> {
        self.spec.check_action(action)?;
        let c = &self.config;
        let direction = action as f64 - 1.0;
        let vmax = c.max_paddle_speed();
        let (plo, phi) = c.paddle_range();

        let s = &mut self.state;
        s.paddle_velocity = (c.velocity_damping * s.paddle_velocity + c.paddle_accel * direction).clamp(-vmax, vmax);
        s.paddle_x += s.paddle_velocity;
        if s.paddle_x <= plo || s.paddle_x >= phi {
            s.paddle_x = s.paddle_x.clamp(plo, phi);
            s.paddle_velocity = 0.0;
        }

        s.fruit_y += c.fruit_speed;
        let mut reward = 0.0;
        if s.fruit_y >= c.height {
            let reach = (c.paddle_width + c.fruit_size) / 2.0;
            reward = if (s.fruit_x - s.paddle_x).abs() <= reach { c.catch_reward } else { c.miss_reward };
            self.spawn_fruit(rng);
        }
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            terminal: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> Catcher {
        Catcher::new(CatcherConfig::default()).unwrap()
    }

    #[test]
    fn aligned_fruit_is_caught_on_contact_step() {
        let mut env = env();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        env.set_raw_state(CatcherState {
            paddle_x: 30.0,
            paddle_velocity: 0.0,
            fruit_x: 30.0,
            fruit_y: 0.0,
        });
        let fall = env.config().fall_duration();
        for step in 1..=fall {
            let r = env.step(1, &mut rng).unwrap();
            if step < fall {
                assert_eq!(r.reward, 0.0, "step {step}");
            } else {
                assert_eq!(r.reward, 1.0);
                assert_eq!(env.raw_state().fruit_y, 0.0);
            }
        }
    }

    #[test]
    fn pinned_paddle_misses_far_fruit() {
        let mut env = env();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        env.set_raw_state(CatcherState {
            paddle_x: 56.0,
            paddle_velocity: 0.0,
            fruit_x: 2.0,
            fruit_y: 0.0,
        });
        let mut rewards = Vec::new();
        for _ in 0..env.config().fall_duration() {
            rewards.push(env.step(2, &mut rng).unwrap().reward);
            assert_eq!(env.raw_state().paddle_x, 56.0);
        }
        assert_eq!(*rewards.last().unwrap(), -1.0);
        assert!(rewards[..rewards.len() - 1].iter().all(|&r| r == 0.0));
    }

    #[test]
    fn simulated_fall_matches_closed_form() {
        let mut env = env();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        env.reset(&mut rng);
        let mut steps = 0;
        loop {
            steps += 1;
            if env.step(1, &mut rng).unwrap().reward != 0.0 {
                break;
            }
        }
        assert_eq!(steps, 43);
        assert_eq!(steps, (64.0f64 / 1.5).ceil() as usize);
        assert_eq!(steps, env.config().fall_duration());
    }

    #[test]
    fn random_play_stays_normalized_and_bounded() {
        let mut env = env();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        env.reset(&mut rng);
        let t = 10_000;
        let mut total = 0.0;
        let mut outcomes = 0;
        for _ in 0..t {
            let r = env.step(rng.random_range(0..3), &mut rng).unwrap();
            assert!(r.next_state.iter().all(|x| (-1.0..=1.0).contains(x)));
            assert!(!r.terminal);
            assert!(r.reward == 0.0 || r.reward == 1.0 || r.reward == -1.0);
            if r.reward != 0.0 {
                outcomes += 1;
            }
            total += r.reward;
        }
        let fall = env.config().fall_duration();
        assert!(outcomes <= t / fall + 1);
        assert!(total <= (t / fall) as f64);
    }
}
