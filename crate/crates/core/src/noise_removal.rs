//! First enhancement stage: drop the points an agent classifies as noise.

use serde::{Deserialize, Serialize};

use crate::agent::{serialize_context, Agent, HeuristicAgent, NoiseMask, TokenizerConfig};
use crate::error::{Error, Result};
use crate::model::{CloudWindow, Frame, ScenarioDescriptor, SensorSetup};

/// Instruction placed in the prompt span of the token sequence.
pub const NOISE_PROMPT: &str = "Classify every radar point of the window as a reflection from a person or as noise. \
Keep weak but clustered returns from people who are sitting still.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub kept: usize,
    pub dropped: usize,
    /// Mean confidence over all decisions; one for an empty window.
    pub mean_confidence: f64,
    /// Set when the agent's reply was unusable and the heuristic decided instead.
    pub fallback: bool,
}

/// Keeps exactly the points with `keep = true`, preserving frames and order.
pub fn apply_mask(window: &CloudWindow, mask: &NoiseMask) -> Result<CloudWindow> {
    mask.validate(window.point_count())?;
    let mut flags = mask.keep.iter();
    let frames = window
        .frames
        .iter()
        .map(|f| {
            let points = f.points.iter().filter(|_| *flags.next().unwrap_or(&false)).copied().collect();
            Frame::new(f.index, f.timestamp_ms, points)
        })
        .collect();
    Ok(CloudWindow {
        start_ms: window.start_ms,
        duration_ms: window.duration_ms,
        frames,
    })
}

/// Asks `agent` for a noise mask and applies it. An unreachable agent is an
/// error; a malformed reply falls back to the heuristic classifier.
pub fn remove_noise(
    window: &CloudWindow,
    agent: &dyn Agent,
    setup: &SensorSetup,
    scenario: &ScenarioDescriptor,
    tokenizer: &TokenizerConfig,
) -> Result<(CloudWindow, RemovalReport)> {
    let seq = serialize_context(window, setup, scenario, NOISE_PROMPT, tokenizer);
    let total = window.point_count();
    let (mask, fallback) = match agent.classify_noise(&seq).and_then(|m| m.validate(total).map(|()| m)) {
        Ok(mask) => (mask, false),
        Err(Error::MalformedAgentReply(reason)) => {
            log::warn!("agent `{}` sent an unusable noise mask ({reason}); using heuristic", agent.name());
            (HeuristicAgent::default().classify_noise(&seq)?, true)
        }
        Err(e) => return Err(e),
    };
    let cleaned = apply_mask(window, &mask)?;
    let kept = cleaned.point_count();
    let mean_confidence = if total == 0 {
        1.0
    } else {
        mask.confidence.iter().sum::<f64>() / total as f64
    };
    Ok((
        cleaned,
        RemovalReport {
            kept,
            dropped: total - kept,
            mean_confidence,
            fallback,
        },
    ))
}
