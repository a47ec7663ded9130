use rand::RngCore;

use super::{EnvError, EnvSpec, Environment, StepResult};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Deterministic chain with `n` states; the rightmost state is terminal and
/// entering it pays +1. Used as an exact-solution oracle for the agent.
pub struct ChainMdp {
    spec: EnvSpec,
    len: usize,
    position: usize,
}

impl ChainMdp {
    pub fn new(len: usize) -> Result<Self, EnvError> {
        if len < 2 {
            return Err(EnvError::InvalidConfig("chain needs at least two states".into()));
        }
        let spec = EnvSpec {
            name: "chain".into(),
            state_dim: 1,
            num_actions: 2,
            state_lower_bounds: vec![0.0],
            state_upper_bounds: vec![(len - 1) as f64],
        };
        Ok(Self { spec, len, position: 0 })
    }

    pub fn num_states(&self) -> usize {
        self.len
    }

    pub fn position(&self) -> usize {
        self.position
    }

    /// Normalized observation of chain position `pos`.
    pub fn encode(&self, pos: usize) -> Vec<f64> {
        self.spec.normalize(&[pos as f64])
    }

    /// Inverse of [`ChainMdp::encode`].
    pub fn decode(&self, state: &[f64]) -> usize {
        self.spec.denormalize(state)[0].round() as usize
    }

    fn next(&self, pos: usize, action: usize) -> usize {
        match action {
            LEFT => pos.saturating_sub(1),
            _ => (pos + 1).min(self.len - 1),
        }
    }
}

impl Environment for ChainMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.position = 0;
        self.encode(0)
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<StepResult, EnvError> {
        self.spec.check_action(action)?;
        if self.position == self.len - 1 {
            return Err(EnvError::NeedsReset);
        }
        self.position = self.next(self.position, action);
        let terminal = self.position == self.len - 1;
        Ok(StepResult {
            next_state: self.encode(self.position),
            reward: if terminal { 1.0 } else { 0.0 },
            terminal,
        })
    }
}

/// Optimal action values `[q(s, left), q(s, right)]` for every state of a
/// chain of length `len`, by value iteration to a sup-norm change below `tol`.
/// The terminal state's row is zero.
pub fn value_iteration(len: usize, gamma: f64, tol: f64) -> Vec<[f64; 2]> {
    let chain = ChainMdp::new(len.max(2)).expect("len >= 2");
    let goal = len - 1;
    let mut q = vec![[0.0_f64; 2]; len];
    loop {
        let mut next = vec![[0.0; 2]; len];
        for (s, row) in next.iter_mut().enumerate().take(goal) {
            for a in [LEFT, RIGHT] {
                let s2 = chain.next(s, a);
                row[a] = if s2 == goal {
                    1.0
                } else {
                    gamma * q[s2][LEFT].max(q[s2][RIGHT])
                };
            }
        }
        let delta = q
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max);
        q = next;
        if delta < tol {
            return q;
        }
    }
}
