//! The decision-making boundary of the pipeline.
//!
//! An [`Agent`] answers three questions: which points of a window are noise,
//! which compensation strategies are worth trying from a given state, and
//! where the individuals are on a density map. [`HeuristicAgent`] answers
//! them deterministically offline; [`RemoteAgent`] forwards them to an HTTP
//! service speaking the JSON protocol documented on that type.

mod heuristic;
mod remote;
mod tokenize;

use serde::{Deserialize, Serialize};

use crate::compensation::{CompensationStateSummary, CompensationStrategy};
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::model::Detection;

pub use heuristic::{HeuristicAgent, HeuristicConfig};
pub use remote::{RemoteAgent, RemoteConfig, AGENT_URL_ENV};
pub use tokenize::{
    decode_raw_points, energy_bin, energy_bin_value, serialize_context, ModalitySpans, QuantizedPoint, TokenSequence,
    TokenizerConfig, ENERGY_BINS, PAD_TOKEN, POINT_CAP, TOKENS_PER_POINT, TRUNCATED_TOKEN, UNTRUNCATED_TOKEN,
};

/// Per-point keep decisions for one window, flattened frame-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMask {
    pub keep: Vec<bool>,
    pub confidence: Vec<f64>,
}

impl NoiseMask {
    pub fn all(keep: bool, len: usize) -> Self {
        Self {
            keep: vec![keep; len],
            confidence: vec![1.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    /// Checks the mask against the expected point count.
    pub fn validate(&self, expected: usize) -> Result<()> {
        if self.keep.len() != expected || self.confidence.len() != expected {
            return Err(Error::MalformedAgentReply(format!(
                "mask has {} decisions and {} confidences for {expected} points",
                self.keep.len(),
                self.confidence.len()
            )));
        }
        if let Some(c) = self.confidence.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::MalformedAgentReply(format!("confidence {c} outside [0, 1]")));
        }
        Ok(())
    }
}

/// A strategy suggested by an agent. `clamped` is set when the agent's raw
/// suggestion violated the parameter bounds and had to be pulled back in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub strategy: CompensationStrategy,
    pub clamped: bool,
}

pub trait Agent: Send + Sync {
    fn name(&self) -> &str;

    /// Whether repeated calls with equal inputs are guaranteed to agree.
    fn is_deterministic(&self) -> bool;

    fn classify_noise(&self, seq: &TokenSequence) -> Result<NoiseMask>;

    /// Between 1 and `k` distinct strategies worth trying from `summary`.
    fn propose_strategies(&self, summary: &CompensationStateSummary, k: usize) -> Result<Vec<Proposal>>;

    /// Individuals located on `grid`; `image` is its rendering.
    fn detect_crowd(&self, image: &[u8], grid: &Heatmap) -> Result<Vec<Detection>>;
}

/// Selects the remote agent when `MMCOUNT_AGENT_URL` is set, the heuristic otherwise.
pub fn agent_from_env() -> Box<dyn Agent> {
    match std::env::var(AGENT_URL_ENV) {
        Ok(url) if !url.trim().is_empty() => Box::new(RemoteAgent::new(RemoteConfig::new(url))),
        _ => Box::new(HeuristicAgent::default()),
    }
}
