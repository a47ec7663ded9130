use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{EnvError, EnvSpec, Environment, StepResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MountainCarConfig {
    pub min_position: f64,
    /// Goal position; also the upper position clip.
    pub goal_position: f64,
    pub max_speed: f64,
    pub force: f64,
    pub gravity: f64,
    pub start_low: f64,
    pub start_high: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
}

impl Default for MountainCarConfig {
    fn default() -> Self {
        Self {
            min_position: -1.2,
            goal_position: 0.5,
            max_speed: 0.07,
            force: 0.001,
            gravity: 0.0025,
            start_low: -0.6,
            start_high: -0.4,
            step_reward: -1.0,
            // Zero instead of -1 on reaching the goal.
            goal_reward: 0.0,
        }
    }
}

/// Mountain car; reward -1 per step and 0 on the step that reaches the goal.
pub struct MountainCar {
    config: MountainCarConfig,
    spec: EnvSpec,
    position: f64,
    velocity: f64,
    done: bool,
}

impl MountainCar {
    pub fn new(config: MountainCarConfig) -> Result<Self, EnvError> {
        if !(config.min_position < config.goal_position && config.max_speed > 0.0)
            || config.start_low.is_nan()
            || config.start_high.is_nan()
            || config.start_low > config.start_high
        {
            return Err(EnvError::InvalidConfig("mountain car bounds".into()));
        }
        let spec = EnvSpec {
            name: "mountain_car".into(),
            state_dim: 2,
            num_actions: 3,
            state_lower_bounds: vec![config.min_position, -config.max_speed],
            state_upper_bounds: vec![config.goal_position, config.max_speed],
        };
        Ok(Self {
            position: -0.5,
            velocity: 0.0,
            done: false,
            config,
            spec,
        })
    }

    /// Raw `(position, velocity)`.
    pub fn raw_state(&self) -> (f64, f64) {
        (self.position, self.velocity)
    }

    pub fn set_raw_state(&mut self, position: f64, velocity: f64) {
        self.position = position;
        self.velocity = velocity;
        self.done = false;
    }

    /// One step of the closed-form dynamics: returns `(p', v', reached_goal)`.
    pub fn dynamics(c: &MountainCarConfig, position: f64, velocity: f64, action: usize) -> (f64, f64, bool) {
        let push = action as f64 - 1.0;
        let mut v = velocity + c.force * push - c.gravity * (3.0 * position).cos();
        v = v.clamp(-c.max_speed, c.max_speed);
        let p = (position + v).clamp(c.min_position, c.goal_position);
        if p <= c.min_position && v < 0.0 {
            v = 0.0;
        }
        (p, v, p >= c.goal_position)
    }

    fn observe(&self) -> Vec<f64> {
        self.spec.normalize(&[self.position, self.velocity])
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let (lo, hi) = (self.config.start_low, self.config.start_high);
        self.position = if hi > lo { rng.random_range(lo..hi) } else { lo };
        self.velocity = 0.0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<StepResult, EnvError> {
        self.spec.check_action(action)?;
        if self.done {
            return Err(EnvError::NeedsReset);
        }
        let (p, v, terminal) = Self::dynamics(&self.config, self.position, self.velocity, action);
        self.position = p;
        self.velocity = v;
        self.done = terminal;
        Ok(StepResult {
            next_state: self.observe(),
            reward: if terminal { self.config.goal_reward } else { self.config.step_reward },
            terminal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn car() -> MountainCar {
        MountainCar::new(MountainCarConfig::default()).unwrap()
    }

    #[test]
    fn accelerate_right_from_rest() {
        let mut env = car();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.set_raw_state(-0.5, 0.0);
        let r = env.step(2, &mut rng).unwrap();
        let (p, v) = env.raw_state();
        let expected_v = 0.001 - 0.0025 * (-1.5f64).cos();
        assert!((v - expected_v).abs() < 1e-15);
        assert!((v - 0.000823).abs() < 1e-6);
        assert!((p - (-0.5 + expected_v)).abs() < 1e-15);
        assert!((p + 0.499177).abs() < 1e-6);
        assert_eq!(r.reward, -1.0);
        assert!(!r.terminal);
    }

    #[test]
    fn coasting_is_gravity_only() {
        let (_, v, _) = MountainCar::dynamics(&MountainCarConfig::default(), -0.5, 0.0, 1);
        assert_eq!(v, -0.0025 * (-1.5f64).cos());
    }

    #[test]
    fn reaching_goal_gives_zero_reward_and_terminates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for action in [1, 2] {
            let mut env = car();
            env.set_raw_state(0.499, 0.07);
            let r = env.step(action, &mut rng).unwrap();
            assert!(env.raw_state().0 >= 0.5);
            assert_eq!(r.reward, 0.0);
            assert!(r.terminal);
            assert_eq!(env.step(0, &mut rng).unwrap_err(), EnvError::NeedsReset);
        }
    }

    #[test]
    fn left_wall_stops_car() {
        let (p, v, _) = MountainCar::dynamics(&MountainCarConfig::default(), -1.19, -0.05, 0);
        assert_eq!(p, -1.2);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = car();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            env.step(3, &mut rng).unwrap_err(),
            EnvError::InvalidAction { action: 3, num_actions: 3 }
        );
    }

    #[test]
    fn random_rollout_respects_bounds() {
        let mut env = car();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s0 = env.reset(&mut rng);
        let (p0, v0) = env.raw_state();
        assert!((-0.6..-0.4).contains(&p0) && v0 == 0.0);
        assert!(s0.iter().all(|x| (-1.0..=1.0).contains(x)));
        for _ in 0..20_000 {
            let a = rng.random_range(0..3);
            let r = env.step(a, &mut rng).unwrap();
            let (p, v) = env.raw_state();
            assert!((-1.2..=0.5).contains(&p) && v.abs() <= 0.07);
            assert!(r.next_state.iter().all(|x| (-1.0..=1.0).contains(x)));
            assert!(r.reward == -1.0 || (r.reward == 0.0 && r.terminal));
            if r.terminal {
                env.reset(&mut rng);
            }
        }
    }
}
