//! Stationary crowd counting from mmWave radar point clouds.
//!
//! The pipeline ingests radar captures ([`ingestion`]), removes noise with an
//! agent's help ([`noise_removal`]), searches for a power-compensation
//! strategy with Monte Carlo Tree Search ([`mcts`], [`compensation`]), turns
//! the enhanced points into density maps ([`heatmap`]) and counts people on
//! them ([`detection`]). [`metrics`] scores the counts and [`synth`] produces
//! ground-truthed scenes to run it all offline. [`pipeline`] wires the
//! stages together.

pub mod agent;
pub mod compensation;
pub mod detection;
pub mod error;
pub mod heatmap;
pub mod ingestion;
pub mod mcts;
pub mod metrics;
pub mod model;
pub mod noise_removal;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
