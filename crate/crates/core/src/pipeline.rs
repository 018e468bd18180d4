//! End-to-end orchestration: enhance, detect and evaluate.
//!
//! Enhancement works on consecutive non-overlapping windows so every frame is
//! cleaned and compensated exactly once. Detection then slides overlapping
//! windows over the enhanced frames and smooths the per-window counts.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, TokenizerConfig};
use crate::compensation::{apply_strategy, CompensationStrategy};
use crate::detection::{assemble_report, detect_window, lookback, WindowDetections};
use crate::error::{Error, Result};
use crate::heatmap::{Extent, Heatmap, DEFAULT_GRID};
use crate::ingestion::{window_fixed, window_sliding, DEFAULT_STRIDE_MS};
use crate::mcts::{run_search, SearchConfig, SearchTrace};
use crate::metrics::{evaluate, EvaluationReport, GameSample};
use crate::model::{CloudWindow, Detection, Frame, ScenarioDescriptor, SensorSetup, DEFAULT_WINDOW_MS};
use crate::noise_removal::{remove_noise, RemovalReport};
use crate::synth::{generate_scene, protocol_samples, EvaluationSample, GroundTruth, ProtocolConfig, SceneSpec};

/// Order of the enhancement stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnhanceMode {
    /// Noise removal, then compensation.
    #[default]
    Default,
    /// Compensation, then noise removal.
    SwapOrder,
    /// Raw data straight to detection.
    NoEnhance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    pub window_ms: u64,
    pub mode: EnhanceMode,
    pub search: SearchConfig,
    pub tokenizer: TokenizerConfig,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            window_ms: DEFAULT_WINDOW_MS,
            mode: EnhanceMode::Default,
            search: SearchConfig::default(),
            tokenizer: TokenizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub window_ms: u64,
    pub stride_ms: u64,
    pub grid: (usize, usize),
    pub extent: Extent,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            window_ms: DEFAULT_WINDOW_MS,
            stride_ms: DEFAULT_STRIDE_MS,
            grid: DEFAULT_GRID,
            extent: Extent::room(),
        }
    }
}

/// Everything a pipeline run depends on besides the scene and the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub enhance: EnhanceConfig,
    pub detect: DetectConfig,
    pub protocol: ProtocolConfig,
    pub game_levels: Vec<u32>,
    pub setup: SensorSetup,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            enhance: EnhanceConfig::default(),
            detect: DetectConfig::default(),
            protocol: ProtocolConfig::default(),
            game_levels: vec![0, 1, 2, 3],
            setup: SensorSetup::default(),
        }
    }
}

/// What enhancement did to one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEnhancement {
    pub window_start_ms: u64,
    pub removal: Option<RemovalReport>,
    /// Chosen compensation; absent when the data was left as is.
    pub strategy: Option<CompensationStrategy>,
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<SearchTrace>,
}

fn compensate(
    window: &CloudWindow,
    agent: &dyn Agent,
    setup: &SensorSetup,
    scenario: &ScenarioDescriptor,
    config: &EnhanceConfig,
    record: &mut WindowEnhancement,
    keep_trace: bool,
) -> Result<CloudWindow> {
    let outcome = run_search(window, agent, setup, scenario, config.search)?;
    record.strategy = outcome.best_strategy;
    record.score = Some(outcome.score.total);
    if keep_trace {
        record.trace = Some(outcome.trace);
    }
    Ok(apply_strategy(window, outcome.best_strategy.as_ref()))
}

/// Runs both enhancement stages on one window in the configured order.
pub fn enhance_window(
    window: &CloudWindow,
    agent: &dyn Agent,
    setup: &SensorSetup,
    scenario: &ScenarioDescriptor,
    config: &EnhanceConfig,
    keep_trace: bool,
) -> Result<(CloudWindow, WindowEnhancement)> {
    let mut record = WindowEnhancement {
        window_start_ms: window.start_ms,
        removal: None,
        strategy: None,
        score: None,
        trace: None,
    };
    let out = match config.mode {
        EnhanceMode::NoEnhance => window.clone(),
        EnhanceMode::Default => {
            let (clean, report) = remove_noise(window, agent, setup, scenario, &config.tokenizer)?;
            record.removal = Some(report);
            compensate(&clean, agent, setup, scenario, config, &mut record, keep_trace)?
        }
        EnhanceMode::SwapOrder => {
            let boosted = compensate(window, agent, setup, scenario, config, &mut record, keep_trace)?;
            let (clean, report) = remove_noise(&boosted, agent, setup, scenario, &config.tokenizer)?;
            record.removal = Some(report);
            clean
        }
    };
    Ok((out, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceOutput {
    pub frames: Vec<Frame>,
    pub windows: Vec<WindowEnhancement>,
}

/// Enhances a capture window by window. Windows are processed in parallel
/// on the current rayon pool; output order follows the input.
pub fn enhance_frames(
    frames: &[Frame],
    agent: &dyn Agent,
    setup: &SensorSetup,
    scenario: &ScenarioDescriptor,
    config: &EnhanceConfig,
    keep_trace: bool,
) -> Result<EnhanceOutput> {
    config.search.validate()?;
    if frames.is_empty() {
        return Ok(EnhanceOutput { frames: Vec::new(), windows: Vec::new() });
    }
    let windows = window_fixed(frames, config.window_ms)?;
    let results: Vec<(CloudWindow, WindowEnhancement)> = windows
        .par_iter()
        .map(|w| enhance_window(w, agent, setup, scenario, config, keep_trace))
        .collect::<Result<_>>()?;
    let mut out = EnhanceOutput { frames: Vec::with_capacity(frames.len()), windows: Vec::with_capacity(results.len()) };
    for (w, record) in results {
        out.frames.extend(w.frames);
        out.windows.push(record);
    }
    Ok(out)
}

/// Heatmaps, detections and smoothed counts over sliding windows.
pub fn detect_frames(frames: &[Frame], agent: &dyn Agent, config: &DetectConfig) -> Result<Vec<WindowDetections>> {
    config.extent.validate()?;
    Heatmap::empty(config.extent, config.grid)?;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let windows = window_sliding(frames, config.window_ms, config.stride_ms)?;
    let per_window: Vec<(u64, Vec<Detection>)> = windows
        .par_iter()
        .map(|w| {
            let (hm, _) = Heatmap::from_window(w, config.extent, config.grid)?;
            Ok((w.start_ms, detect_window(&hm, agent)?))
        })
        .collect::<Result<_>>()?;
    Ok(assemble_report(per_window, lookback(config.window_ms, config.stride_ms)))
}

/// Count and positions reported for an evaluation sample: the smoothed count
/// of the last full window inside the sample, with the detections of the
/// most recent window whose raw count agrees with it.
pub fn sample_prediction(report: &[WindowDetections], sample: &EvaluationSample, window_ms: u64) -> (usize, Vec<Detection>) {
    let inside: Vec<&WindowDetections> = report
        .iter()
        .filter(|w| (sample.start_ms..sample.end_ms).contains(&w.window_start_ms))
        .collect();
    let full: Vec<&WindowDetections> =
        inside.iter().copied().filter(|w| w.window_start_ms + window_ms <= sample.end_ms).collect();
    let candidates = if full.is_empty() { &inside } else { &full };
    let Some(last) = candidates.last() else {
        return (0, Vec::new());
    };
    let count = last.smoothed_count;
    let detections = candidates
        .iter()
        .rev()
        .find(|w| w.raw_count == count)
        .map_or_else(|| last.detections.clone(), |w| w.detections.clone());
    (count, detections)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub tick: usize,
    pub start_ms: u64,
    pub predicted_count: usize,
    pub truth_count: usize,
    pub detections: Vec<Detection>,
}

/// Scores a detection report against ground truth at the protocol ticks.
pub fn evaluate_report(
    report: &[WindowDetections],
    samples: &[EvaluationSample],
    config: &PipelineConfig,
) -> Result<(EvaluationReport, Vec<SampleResult>)> {
    let mut game_samples = Vec::with_capacity(samples.len());
    let mut counts = Vec::with_capacity(samples.len());
    let mut results = Vec::with_capacity(samples.len());
    for s in samples {
        let (count, detections) = sample_prediction(report, s, config.detect.window_ms);
        game_samples.push(GameSample::from_detections(config.detect.extent, &detections, s.truth.clone()));
        counts.push(count);
        results.push(SampleResult {
            tick: s.tick,
            start_ms: s.start_ms,
            predicted_count: count,
            truth_count: s.truth.len(),
            detections,
        });
    }
    let eval = evaluate(&game_samples, Some(&counts), &config.detect.extent, &config.game_levels)?;
    Ok((eval, results))
}

/// Per-sample output of [`run_samples`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRun {
    pub result: SampleResult,
    pub windows: Vec<WindowDetections>,
    pub enhancement: Vec<WindowEnhancement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub evaluation: EvaluationReport,
    pub samples: Vec<SampleRun>,
}

/// Wall-clock per stage, milliseconds.
pub type StageTimings = BTreeMap<String, f64>;

/// Enhances and detects only the frames of each evaluation sample, then
/// scores the samples.
pub fn run_samples(
    frames: &[Frame],
    samples: &[EvaluationSample],
    agent: &dyn Agent,
    scenario: &ScenarioDescriptor,
    config: &PipelineConfig,
    timings: &mut StageTimings,
) -> Result<PipelineReport> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let t = Instant::now();
    let enhanced: Vec<EnhanceOutput> = samples
        .par_iter()
        .map(|s| enhance_frames(s.frames(frames), agent, &config.setup, scenario, &config.enhance, false))
        .collect::<Result<_>>()?;
    timings.insert("enhance".into(), elapsed_ms(t));

    let t = Instant::now();
    let reports: Vec<Vec<WindowDetections>> = enhanced
        .par_iter()
        .map(|e| detect_frames(&e.frames, agent, &config.detect))
        .collect::<Result<_>>()?;
    timings.insert("detect".into(), elapsed_ms(t));

    let t = Instant::now();
    let mut results = Vec::with_capacity(samples.len());
    let mut game_samples = Vec::with_capacity(samples.len());
    let mut counts = Vec::with_capacity(samples.len());
    for (s, report) in samples.iter().zip(&reports) {
        let (count, detections) = sample_prediction(report, s, config.detect.window_ms);
        game_samples.push(GameSample::from_detections(config.detect.extent, &detections, s.truth.clone()));
        counts.push(count);
        results.push(SampleResult {
            tick: s.tick,
            start_ms: s.start_ms,
            predicted_count: count,
            truth_count: s.truth.len(),
            detections,
        });
    }
    let evaluation = evaluate(&game_samples, Some(&counts), &config.detect.extent, &config.game_levels)?;
    timings.insert("eval".into(), elapsed_ms(t));

    let samples = results
        .into_iter()
        .zip(reports)
        .zip(enhanced)
        .map(|((result, windows), e)| SampleRun { result, windows, enhancement: e.windows })
        .collect();
    Ok(PipelineReport { evaluation, samples })
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Reproducibility record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub agent: String,
    /// False when a nondeterministic agent took part.
    pub reproducible: bool,
    pub scene: SceneSpec,
    pub config: PipelineConfig,
    pub jobs: usize,
    pub stage_ms: StageTimings,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub frames: Vec<Frame>,
    pub truth: GroundTruth,
    pub report: PipelineReport,
    pub manifest: RunManifest,
}

/// Synthesizes the scene with `seed`, then enhances, detects and evaluates
/// at every protocol tick.
pub fn run_synthetic(spec: &SceneSpec, seed: u64, agent: &dyn Agent, config: &PipelineConfig) -> Result<PipelineRun> {
    let mut timings = StageTimings::new();
    let scene = SceneSpec { seed, duration_s: config.protocol.session_s, ..spec.clone() };
    let t = Instant::now();
    let (frames, truth) = generate_scene(&scene, &config.setup)?;
    timings.insert("synth".into(), elapsed_ms(t));
    let samples = protocol_samples(&truth, &config.protocol);
    let report = run_samples(&frames, &samples, agent, &scene.scenario, config, &mut timings)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        agent: agent.name().into(),
        reproducible: agent.is_deterministic(),
        scene,
        config: config.clone(),
        jobs: rayon::current_num_threads(),
        stage_ms: timings,
    };
    Ok(PipelineRun { frames, truth, report, manifest })
}
