//! Episodic environments behind one interface. Every emitted state is
//! normalized to `[-1, 1]` per dimension.

mod catcher;
mod chain;
mod mountain_car;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catcher::{Catcher, CatcherConfig, CatcherState};
pub use chain::{ChainMdp, value_iteration};
pub use mountain_car::{MountainCar, MountainCarConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid action {action}; environment has {num_actions} actions")]
    InvalidAction { action: usize, num_actions: usize },
    #[error("episode is over; call reset before stepping")]
    NeedsReset,
    #[error("invalid environment constants: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub num_actions: usize,
    /// Raw (unnormalized) bounds per dimension.
    pub state_lower_bounds: Vec<f64>,
    pub state_upper_bounds: Vec<f64>,
}

impl EnvSpec {
    /// Maps a raw state into `[-1, 1]^d`.
    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.state_lower_bounds.iter().zip(&self.state_upper_bounds))
            .map(|(&x, (&lo, &hi))| (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
            .collect()
    }

    pub fn denormalize(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .zip(self.state_lower_bounds.iter().zip(&self.state_upper_bounds))
            .map(|(&x, (&lo, &hi))| lo + (x + 1.0) * 0.5 * (hi - lo))
            .collect()
    }

    fn check_action(&self, action: usize) -> Result<(), EnvError> {
        if action >= self.num_actions {
            return Err(EnvError::InvalidAction {
                action,
                num_actions: self.num_actions,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns the normalized initial state.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<StepResult, EnvError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    MountainCar,
    Catcher,
    Chain,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::MountainCar => "mountain_car",
            EnvKind::Catcher => "catcher",
            EnvKind::Chain => "chain",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mountain_car" => Ok(EnvKind::MountainCar),
            "catcher" => Ok(EnvKind::Catcher),
            "chain" => Ok(EnvKind::Chain),
            other => Err(format!("unknown environment `{other}` (expected mountain_car, catcher or chain)")),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tunable constants for every environment, as they appear in config files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConstants {
    pub mountain_car: MountainCarConfig,
    pub catcher: CatcherConfig,
    pub chain_length: ChainLength,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainLength(pub usize);

impl Default for ChainLength {
    fn default() -> Self {
        ChainLength(5)
    }
}

pub fn make_env(kind: EnvKind, constants: &EnvConstants) -> Result<Box<dyn Environment>, EnvError> {
    Ok(match kind {
        EnvKind::MountainCar => Box::new(MountainCar::new(constants.mountain_car.clone())?),
        EnvKind::Catcher => Box::new(Catcher::new(constants.catcher.clone())?),
        EnvKind::Chain => Box::new(ChainMdp::new(constants.chain_length.0)?),
    })
}

pub fn env_spec(kind: EnvKind, constants: &EnvConstants) -> Result<EnvSpec, EnvError> {
    Ok(make_env(kind, constants)?.spec().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_shapes() {
        let c = EnvConstants::default();
        let shapes: Vec<_> = [EnvKind::MountainCar, EnvKind::Catcher, EnvKind::Chain]
            .iter()
            .map(|&k| {
                let s = env_spec(k, &c).unwrap();
                assert!(s.state_lower_bounds.iter().zip(&s.state_upper_bounds).all(|(l, u)| l < u));
                (s.state_dim, s.num_actions)
            })
            .collect();
        assert_eq!(shapes, vec![(2, 3), (4, 3), (1, 2)]);
    }

    #[test]
    fn normalization_round_trips() {
        let s = env_spec(EnvKind::MountainCar, &EnvConstants::default()).unwrap();
        assert_eq!(s.normalize(&[-1.2, -0.07]), vec![-1.0, -1.0]);
        assert_eq!(s.normalize(&[0.5, 0.07]), vec![1.0, 1.0]);
        let back = s.denormalize(&s.normalize(&[-0.5, 0.01]));
        assert!((back[0] + 0.5).abs() < 1e-12 && (back[1] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn env_kind_parses() {
        assert_eq!("catcher".parse::<EnvKind>().unwrap(), EnvKind::Catcher);
        assert!("pong".parse::<EnvKind>().is_err());
    }
}
