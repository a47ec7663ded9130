use serde::{Deserialize, Serialize};

use super::{Gradients, NnError, QNetwork};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub timestep: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &QNetwork<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<T>> = net.param_slices().iter().map(|s| vec![T::zero(); s.len()]).collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            timestep: 0,
        }
    }

    /// One Adam update of `net` in place.
    pub fn step(&mut self, net: &mut QNetwork<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        let g = grads.slices();
        let mut params = net.param_slices_mut();
        let shapes_ok = g.len() == params.len()
            && params.len() == self.first_moment.len()
            && params
                .iter()
                .zip(&g)
                .zip(&self.first_moment)
                .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
        if !shapes_ok {
            return Err(NnError::Shape("adam state, gradients and parameters disagree".into()));
        }

        self.timestep += 1;
        let c = &self.config;
        let t = self.timestep as i32;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bias1 = T::lit(1.0 - c.beta1.powi(t));
        let bias2 = T::lit(1.0 - c.beta2.powi(t));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.epsilon);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(g)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpConfig;

    fn scalar_net(w: f64) -> QNetwork<f64> {
        let mut net = QNetwork::zeros(MlpConfig::new(1, vec![1], 1).unwrap()).unwrap();
        net.output_weights.set(0, 0, w);
        net
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(0.0);
        let mut adam = AdamState::new(&net, AdamConfig::with_learning_rate(0.1));
        let mut g = Gradients::zeros_like(&net);
        g.output_weights.set(0, 0, 1.0);
        adam.step(&mut net, &g).unwrap();
        let expected = -0.1 * (1.0 / (1.0 + 1e-8));
        assert!((net.output_weights.get(0, 0) - expected).abs() < 1e-15);
        assert_eq!(adam.timestep, 1);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut net = scalar_net(0.5);
        let mut adam = AdamState::new(&net, AdamConfig::with_learning_rate(0.1));
        let mut g = Gradients::zeros_like(&net);
        g.output_weights.set(0, 0, 2.0);
        adam.step(&mut net, &g).unwrap();
        let after_first = net.clone();
        let idx = adam.first_moment.len() - 1;
        let (m1, v1) = (adam.first_moment[idx][0], adam.second_moment[idx][0]);

        let zero = Gradients::zeros_like(&net);
        let mut frozen = net.clone();
        let mut adam_zero = AdamState::new(&net, AdamConfig::with_learning_rate(0.1));
        adam_zero.step(&mut frozen, &zero).unwrap();
        assert_eq!(frozen, after_first);

        adam.step(&mut net, &zero).unwrap();
        assert!((adam.first_moment[idx][0] - 0.9 * m1).abs() < 1e-15);
        assert!((adam.second_moment[idx][0] - 0.999 * v1).abs() < 1e-15);
        assert_eq!(adam.timestep, 2);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut net = scalar_net(0.0);
        let other = QNetwork::<f64>::zeros(MlpConfig::new(2, vec![3], 1).unwrap()).unwrap();
        let mut adam = AdamState::new(&net, AdamConfig::default());
        assert!(adam.step(&mut net, &Gradients::zeros_like(&other)).is_err());
    }
}
