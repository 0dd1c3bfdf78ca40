//! Decentralized dual averaging over stochastic networks.
//!
//! The library is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the aliases below fix it to `f64`.

pub mod algorithms;
pub mod analysis;
pub mod error;
pub mod linalg;
pub mod network;
pub mod problems;
pub mod proximal;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Regularizer64 = proximal::Regularizer<f64>;
pub type DistanceGenerator64 = proximal::DistanceGenerator<f64>;
pub type ProblemInstance64 = problems::ProblemInstance<f64>;
pub type AgentDataset64 = problems::AgentDataset<f64>;
pub type MixingModel64 = network::MixingModel<f64>;
pub type NetworkState64 = algorithms::NetworkState<f64>;
pub type StepSchedule64 = algorithms::StepSchedule<f64>;
pub type RunTrace64 = algorithms::RunTrace<f64>;
pub type Reference64 = algorithms::Reference<f64>;
