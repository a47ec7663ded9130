//! Deep Q-learning with sparsity-inducing regularizers, representation
//! sparsity metrics, and a reproducible experiment harness.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! experiment harness runs in `f64` and the aliases below name those types.

pub mod agent;
pub mod cli;
pub mod config;
pub mod envs;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod regularizers;
mod scalar;

pub use scalar::Scalar;

pub type QNetwork = nn::QNetwork<f64>;
pub type QNetworkF32 = nn::QNetwork<f32>;
pub type ForwardTrace = nn::ForwardTrace<f64>;
pub type Gradients = nn::Gradients<f64>;
pub type AdamState = nn::AdamState<f64>;
pub type DqnAgent = agent::DqnAgent<f64>;
pub type ReplayBuffer = agent::ReplayBuffer<f64>;
pub type Transition = agent::Transition<f64>;
pub type RunRecord = agent::RunRecord<f64>;
