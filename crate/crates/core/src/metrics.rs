//! Representation sparsity over a state-space grid: activation overlap,
//! live neurons, normalized overlap and instance sparsity.
//!
//! A neuron is active on an input when its last-hidden-layer activation is
//! strictly positive. Every metric depends only on that on/off pattern.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvSpec;
use crate::nn::{NnError, QNetwork};
use crate::Scalar;

/// Number of histogram bins over `[0, 1]` for instance sparsity.
pub const INSTANCE_SPARSITY_BINS: usize = 101;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("grid needs one point count per state dimension ({expected}), got {actual}")]
    GridDims { expected: usize, actual: usize },
    #[error("every grid dimension needs at least 2 points")]
    GridTooCoarse,
    #[error("overlap needs at least two vertices, got {0}")]
    TooFewVertices(usize),
    #[error("activation rows have inconsistent widths")]
    RaggedActivations,
    #[error("no live neurons; instance sparsity is undefined")]
    NoLiveNeurons,
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Cartesian grid over the normalized state space `[-1, 1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGrid {
    pub vertices: Vec<Vec<f64>>,
    pub per_dim_points: Vec<usize>,
}

impl StateGrid {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Evenly spaced points per dimension, both endpoints included.
pub fn build_grid(spec: &EnvSpec, per_dim_points: &[usize]) -> Result<StateGrid, MetricsError> {
    if per_dim_points.len() != spec.state_dim {
        return Err(MetricsError::GridDims {
            expected: spec.state_dim,
            actual: per_dim_points.len(),
        });
    }
    if per_dim_points.iter().any(|&n| n < 2) {
        return Err(MetricsError::GridTooCoarse);
    }
    let axes: Vec<Vec<f64>> = per_dim_points
        .iter()
        .map(|&n| (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect())
        .collect();
    let mut vertices = vec![Vec::with_capacity(axes.len())];
    for axis in &axes {
        vertices = vertices
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    Ok(StateGrid {
        vertices,
        per_dim_points: per_dim_points.to_vec(),
    })
}

/// Binary activity pattern: `active[v][i]` is true when neuron `i` fires on vertex `v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityPattern {
    pub active: Vec<Vec<bool>>,
    pub width: usize,
}

impl ActivityPattern {
    pub fn from_activations<T: Scalar, R: AsRef<[T]>>(rows: &[R]) -> Result<Self, MetricsError> {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let active = rows
            .iter()
            .map(|r| {
                let r = r.as_ref();
                if r.len() != width {
                    return Err(MetricsError::RaggedActivations);
                }
                Ok(r.iter().map(|&y| y > T::zero()).collect())
            })
            .collect::<Result<Vec<Vec<bool>>, _>>()?;
        Ok(Self { active, width })
    }

    pub fn vertices(&self) -> usize {
        self.active.len()
    }

    /// Number of vertices on which each neuron is active.
    pub fn neuron_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.width];
        for row in &self.active {
            for (c, &on) in counts.iter_mut().zip(row) {
                *c += on as u64;
            }
        }
        counts
    }

    pub fn live_mask(&self) -> Vec<bool> {
        self.neuron_counts().iter().map(|&c| c > 0).collect()
    }
}

/// Sum over unordered vertex pairs of co-active neuron counts, via
/// `sum_i C(c_i, 2)` where `c_i` is neuron `i`'s active-vertex count.
pub fn overlap_pair_sum(pattern: &ActivityPattern) -> u64 {
    pattern.neuron_counts().iter().map(|&c| c * c.saturating_sub(1) / 2).sum()
}

/// Mean activation overlap over all `C(V, 2)` vertex pairs.
pub fn pairwise_overlap(pattern: &ActivityPattern) -> Result<f64, MetricsError> {
    let v = pattern.vertices() as u64;
    if v < 2 {
        return Err(MetricsError::TooFewVertices(v as usize));
    }
    Ok(overlap_pair_sum(pattern) as f64 / (v * (v - 1) / 2) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub overlap: f64,
    pub live_neurons: usize,
    /// `overlap / live_neurons`, or 0 with no live neurons.
    pub normalized_overlap: f64,
    pub per_vertex_active_counts: Vec<usize>,
}

impl OverlapReport {
    pub fn from_pattern(pattern: &ActivityPattern) -> Result<Self, MetricsError> {
        let overlap = pairwise_overlap(pattern)?;
        let live_neurons = pattern.live_mask().iter().filter(|&&l| l).count();
        let normalized_overlap = if live_neurons == 0 { 0.0 } else { overlap / live_neurons as f64 };
        let per_vertex_active_counts = pattern.active.iter().map(|r| r.iter().filter(|&&a| a).count()).collect();
        Ok(Self {
            overlap,
            live_neurons,
            normalized_overlap,
            per_vertex_active_counts,
        })
    }
}

/// Last-hidden-layer activations (evaluation mode) on every grid vertex.
pub fn representation_on_grid<T: Scalar>(net: &QNetwork<T>, grid: &StateGrid) -> Result<Vec<Vec<T>>, MetricsError> {
    grid.vertices
        .iter()
        .map(|v| {
            let x: Vec<T> = v.iter().map(|&c| T::lit(c)).collect();
            Ok(net.forward(&x)?.activations.pop().expect("hidden layer"))
        })
        .collect()
}

pub fn overlap_report<T: Scalar>(net: &QNetwork<T>, grid: &StateGrid) -> Result<OverlapReport, MetricsError> {
    let pattern = ActivityPattern::from_activations(&representation_on_grid(net, grid)?)?;
    OverlapReport::from_pattern(&pattern)
}

/// Per-vertex fraction of live neurons that are active, plus a fixed-bin histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceSparsity {
    pub fractions: Vec<f64>,
    /// [`INSTANCE_SPARSITY_BINS`] equal-width bins over `[0, 1]`; 1.0 falls in the last bin.
    pub histogram: Vec<u64>,
}

impl InstanceSparsity {
    pub fn bin_left(bin: usize) -> f64 {
        bin as f64 / INSTANCE_SPARSITY_BINS as f64
    }

    pub fn bin_of(fraction: f64) -> usize {
        ((fraction * INSTANCE_SPARSITY_BINS as f64).floor() as usize).min(INSTANCE_SPARSITY_BINS - 1)
    }

    pub fn from_pattern(pattern: &ActivityPattern) -> Result<Self, MetricsError> {
        let live = pattern.live_mask();
        let n_live = live.iter().filter(|&&l| l).count();
        if n_live == 0 {
            return Err(MetricsError::NoLiveNeurons);
        }
        let fractions: Vec<f64> = pattern
            .active
            .iter()
            .map(|row| {
                let on = row.iter().zip(&live).filter(|(&a, &l)| a && l).count();
                on as f64 / n_live as f64
            })
            .collect();
        let mut histogram = vec![0u64; INSTANCE_SPARSITY_BINS];
        for &f in &fractions {
            histogram[Self::bin_of(f)] += 1;
        }
        Ok(Self { fractions, histogram })
    }
}

pub fn instance_sparsity<T: Scalar>(net: &QNetwork<T>, grid: &StateGrid) -> Result<InstanceSparsity, MetricsError> {
    let pattern = ActivityPattern::from_activations(&representation_on_grid(net, grid)?)?;
    InstanceSparsity::from_pattern(&pattern)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{env_spec, EnvConstants, EnvKind};
    use crate::nn::{Matrix, MlpConfig};

    fn pattern(rows: &[&[f64]]) -> ActivityPattern {
        ActivityPattern::from_activations(rows).unwrap()
    }

    #[test]
    fn grid_sizes() {
        let c = EnvConstants::default();
        let mc = env_spec(EnvKind::MountainCar, &c).unwrap();
        assert_eq!(build_grid(&mc, &[100, 100]).unwrap().len(), 10_000);
        let catcher = env_spec(EnvKind::Catcher, &c).unwrap();
        let g = build_grid(&catcher, &[10; 4]).unwrap();
        assert_eq!(g.len(), 10_000);
        let axis: Vec<f64> = (0..10).map(|i| -1.0 + 2.0 * i as f64 / 9.0).collect();
        assert!(g.vertices.iter().all(|v| v.iter().all(|x| axis.contains(x))));
        let chain = env_spec(EnvKind::Chain, &c).unwrap();
        assert_eq!(build_grid(&chain, &[2]).unwrap().vertices, vec![vec![-1.0], vec![1.0]]);
        assert!(build_grid(&chain, &[1]).is_err());
        assert!(build_grid(&chain, &[3, 3]).is_err());
    }

    #[test]
    fn two_vertex_overlap() {
        let p = pattern(&[&[1.0, 0.0, 2.0], &[3.0, 0.0, 0.0]]);
        assert_eq!(pairwise_overlap(&p).unwrap(), 1.0);
    }

    #[test]
    fn all_zero_and_all_active() {
        let zeros = pattern(&[&[0.0; 4], &[0.0; 4], &[0.0; 4]]);
        let r = OverlapReport::from_pattern(&zeros).unwrap();
        assert_eq!((r.overlap, r.live_neurons, r.normalized_overlap), (0.0, 0, 0.0));
        assert_eq!(InstanceSparsity::from_pattern(&zeros).unwrap_err(), MetricsError::NoLiveNeurons);

        let dense = pattern(&[&[1.0; 5], &[2.0; 5], &[0.5; 5]]);
        let r = OverlapReport::from_pattern(&dense).unwrap();
        assert_eq!((r.overlap, r.live_neurons, r.normalized_overlap), (5.0, 5, 1.0));
        let s = InstanceSparsity::from_pattern(&dense).unwrap();
        assert!(s.fractions.iter().all(|&f| f == 1.0));
        assert_eq!(s.histogram[INSTANCE_SPARSITY_BINS - 1], 3);
    }

    #[test]
    fn single_vertex_rejected() {
        assert_eq!(
            pairwise_overlap(&pattern(&[&[1.0]])).unwrap_err(),
            MetricsError::TooFewVertices(1)
        );
    }

    #[test]
    fn quarter_active_fraction() {
        let mut row = vec![0.0; 20];
        row[..5].iter_mut().for_each(|x| *x = 1.0);
        let full = vec![1.0; 20];
        let s = InstanceSparsity::from_pattern(&pattern(&[&row, &full])).unwrap();
        assert_eq!(s.fractions[0], 0.25);
        assert_eq!(s.histogram.iter().sum::<u64>(), 2);
    }

    #[test]
    fn toy_network_with_dead_neuron() {
        // Neurons 1-2 fire everywhere on x in [-1, 1] (bias 2), neuron 3 never does.
        let mut net = QNetwork::<f64>::zeros(MlpConfig::new(1, vec![3], 2).unwrap()).unwrap();
        net.hidden_weights[0] = Matrix::from_vec(1, 3, vec![1.0, -1.0, 0.0]);
        net.hidden_biases[0] = vec![2.0, 2.0, -1.0];
        let grid = StateGrid {
            vertices: vec![vec![-1.0], vec![-0.3], vec![0.4], vec![1.0]],
            per_dim_points: vec![4],
        };
        let r = overlap_report(&net, &grid).unwrap();
        assert_eq!((r.overlap, r.live_neurons, r.normalized_overlap), (2.0, 2, 1.0));
        assert_eq!(r.per_vertex_active_counts, vec![2; 4]);

        let zero = QNetwork::<f64>::zeros(MlpConfig::new(1, vec![3], 2).unwrap()).unwrap();
        let r = overlap_report(&zero, &grid).unwrap();
        assert_eq!((r.overlap, r.live_neurons, r.normalized_overlap), (0.0, 0, 0.0));
    }
}
