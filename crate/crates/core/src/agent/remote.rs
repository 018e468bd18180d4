use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::tokenize::TokenSequence;
use super::{Agent, NoiseMask, Proposal};
use crate::compensation::{CompensationStateSummary, CompensationStrategy, SECTORS};
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::model::Detection;

/// Environment variable holding the service base URL.
pub const AGENT_URL_ENV: &str = "MMCOUNT_AGENT_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Permits {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Client for an agent service speaking JSON over HTTP.
///
/// | endpoint          | request                                | reply |
/// |-------------------|----------------------------------------|-------|
/// | `POST /v1/noise`      | `{"tokens": [..], "spans": {..}, "total_points": n}` | `{"keep": [bool], "confidence": [f64]}` |
/// | `POST /v1/strategies` | `{"summary": {..}, "k": k}`          | `{"strategies": [{"alpha", "sector_gains": [8], "clip_db"}]}` |
/// | `POST /v1/detect`     | `{"image_b64": "..", "grid": {..}}`  | `{"detections": [{"x", "y", "confidence", "label"}]}` |
///
/// Transport failures map to [`Error::AgentUnavailable`], contract
/// violations in a reply to [`Error::MalformedAgentReply`].
#[derive(Debug)]
pub struct RemoteAgent {
    config: RemoteConfig,
    http: ureq::Agent,
    permits: Permits,
}

#[derive(Deserialize)]
struct NoiseReply {
    keep: Vec<bool>,
    confidence: Vec<f64>,
}

#[derive(Deserialize)]
struct RawStrategy {
    alpha: f64,
    sector_gains: Vec<f64>,
    clip_db: f64,
}

#[derive(Deserialize)]
struct StrategiesReply {
    strategies: Vec<RawStrategy>,
}

#[derive(Deserialize)]
struct DetectReply {
    detections: Vec<Detection>,
}

impl RemoteAgent {
    pub fn new(config: RemoteConfig) -> Self {
        let http = ureq::AgentBuilder::new().timeout(config.timeout).build();
        let permits = Permits::new(config.max_in_flight);
        Self { config, http, permits }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: serde_json::Value) -> Result<T> {
        let _permit = self.permits.acquire();
        let url = format!("{}{path}", self.config.base_url);
        let response = self.http.post(&url).send_json(body).map_err(|e| match e {
            ureq::Error::Status(code, _) => Error::AgentUnavailable(format!("{url} answered HTTP {code}")),
            ureq::Error::Transport(t) => Error::AgentUnavailable(t.to_string()),
        })?;
        let text = response
            .into_string()
            .map_err(|e| Error::AgentUnavailable(format!("{url}: reading reply failed: {e}")))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedAgentReply(format!("{url}: {e}")))
    }
}

impl Agent for RemoteAgent {
    fn name(&self) -> &str {
        "remote"
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn classify_noise(&self, seq: &TokenSequence) -> Result<NoiseMask> {
        let reply: NoiseReply = self.post(
            "/v1/noise",
            json!({ "tokens": seq.tokens, "spans": seq.spans, "total_points": seq.total_points }),
        )?;
        let mask = NoiseMask {
            keep: reply.keep,
            confidence: reply.confidence,
        };
        mask.validate(seq.total_points)?;
        Ok(mask)
    }

    fn propose_strategies(&self, summary: &CompensationStateSummary, k: usize) -> Result<Vec<Proposal>> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let reply: StrategiesReply = self.post("/v1/strategies", json!({ "summary": summary, "k": k }))?;
        if reply.strategies.is_empty() || reply.strategies.len() > k {
            return Err(Error::MalformedAgentReply(format!(
                "expected 1..={k} strategies, got {}",
                reply.strategies.len()
            )));
        }
        let mut out: Vec<Proposal> = Vec::with_capacity(reply.strategies.len());
        for raw in reply.strategies {
            let gains: [f64; SECTORS] = raw.sector_gains.as_slice().try_into().map_err(|_| {
                Error::MalformedAgentReply(format!("expected {SECTORS} sector gains, got {}", raw.sector_gains.len()))
            })?;
            let (strategy, clamped) = CompensationStrategy::clamped(raw.alpha, gains, raw.clip_db);
            if clamped {
                log::warn!("agent proposal out of bounds, clamped to {strategy:?}");
            }
            if out.iter().all(|p| !p.strategy.approx_eq(&strategy, 1e-6)) {
                out.push(Proposal { strategy, clamped });
            }
        }
        Ok(out)
    }

    fn detect_crowd(&self, image: &[u8], grid: &Heatmap) -> Result<Vec<Detection>> {
        let image_b64 = base64::engine::general_purpose::STANDARD.encode(image);
        let reply: DetectReply = self.post("/v1/detect", json!({ "image_b64": image_b64, "grid": grid }))?;
        for d in &reply.detections {
            if !(0.0..=1.0).contains(&d.confidence) || !d.x.is_finite() || !d.y.is_finite() {
                return Err(Error::MalformedAgentReply(format!("invalid detection {d:?}")));
            }
        }
        Ok(reply.detections)
    }
}
