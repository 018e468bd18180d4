//! Command-line front end: synth, enhance, detect, eval and pipeline.
//!
//! Exit codes: 0 ok, 2 input error, 3 agent unavailable, 4 invariant
//! violation. Failures print a JSON object on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mmcount::agent::{Agent, HeuristicAgent, RemoteAgent, RemoteConfig, AGENT_URL_ENV};
use mmcount::detection::WindowDetections;
use mmcount::heatmap::{render, ColorScale, Heatmap};
use mmcount::ingestion::{parse_capture, window_sliding, write_csv, write_jsonframes, CaptureFormat};
use mmcount::model::{Frame, ScenarioDescriptor, SensorSetup};
use mmcount::pipeline::{
    detect_frames, enhance_frames, evaluate_report, run_samples, run_synthetic, EnhanceMode, PipelineConfig,
    RunManifest, StageTimings,
};
use mmcount::synth::{generate_scene, protocol_samples, GroundTruth, SceneSpec};
use mmcount::{Error, Result};

#[derive(Parser)]
#[command(name = "mmcount", version, about = "Crowd counting from mmWave radar point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a capture and its ground truth from a scene spec.
    Synth(SynthArgs),
    /// Remove noise and compensate power, window by window.
    Enhance(EnhanceArgs),
    /// Heatmaps, detections and smoothed counts over sliding windows.
    Detect(DetectArgs),
    /// GAME and counting accuracy of a detection report.
    Eval(EvalArgs),
    /// Synthesize or ingest, then enhance, detect and evaluate.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON config mirroring the pipeline defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentKind {
    Heuristic,
    Remote,
}

#[derive(Args)]
struct AgentArgs {
    /// Agent backend; MMCOUNT_AGENT_URL, when set, selects the remote agent.
    #[arg(long, value_enum, default_value = "heuristic")]
    agent: AgentKind,
}

#[derive(Args)]
struct InputArgs {
    /// Capture file.
    #[arg(long)]
    input: PathBuf,
    /// csv or jsonframes; guessed from the extension when absent.
    #[arg(long)]
    format: Option<CaptureFormat>,
}

#[derive(Args)]
struct ModeArgs {
    /// Compensate before removing noise.
    #[arg(long, conflicts_with = "no_enhance")]
    swap_order: bool,
    /// Pass raw data straight to detection.
    #[arg(long)]
    no_enhance: bool,
}

#[derive(Args)]
struct DetectFlags {
    #[arg(long)]
    window_ms: Option<u64>,
    #[arg(long)]
    stride_ms: Option<u64>,
    /// Heatmap grid as ROWSxCOLS.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the seed of the spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "jsonframes")]
    format: CaptureFormat,
}

#[derive(Args)]
struct EnhanceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    agent: AgentArgs,
    /// Keep the search trace of every window in the report.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    flags: DetectFlags,
    #[command(flatten)]
    agent: AgentArgs,
    /// Also write a PNG and JSON sidecar per window.
    #[arg(long)]
    heatmaps: bool,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Detection report written by `detect`.
    #[arg(long)]
    detections: PathBuf,
    /// Ground truth written by `synth`.
    #[arg(long)]
    truth: PathBuf,
    /// GAME levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    /// Scene spec to synthesize.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    spec: Option<PathBuf>,
    /// Existing capture; needs --truth.
    #[arg(long, requires = "truth")]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<CaptureFormat>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    flags: DetectFlags,
    #[command(flatten)]
    agent: AgentArgs,
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let rows = r.trim().parse().map_err(|e| format!("rows: {e}"))?;
    let cols = c.trim().parse().map_err(|e| format!("cols: {e}"))?;
    Ok((rows, cols))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::AgentUnavailable(_) | Error::MalformedAgentReply(_) => 3,
        Error::Invariant(_) | Error::DepthExceeded { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Enhance(a) => enhance(a),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a),
        Command::Pipeline(a) => pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(serde_json::from_slice(&fs::read(p)?)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn make_agent(args: &AgentArgs) -> Result<Box<dyn Agent>> {
    if let Ok(url) = std::env::var(AGENT_URL_ENV) {
        if !url.trim().is_empty() {
            return Ok(Box::new(RemoteAgent::new(RemoteConfig::new(url))));
        }
    }
    match args.agent {
        AgentKind::Heuristic => Ok(Box::new(HeuristicAgent::default())),
        AgentKind::Remote => Err(Error::InvalidParameter(format!("--agent remote needs {AGENT_URL_ENV}"))),
    }
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn apply_mode(config: &mut PipelineConfig, mode: &ModeArgs) {
    if mode.swap_order {
        config.enhance.mode = EnhanceMode::SwapOrder;
    } else if mode.no_enhance {
        config.enhance.mode = EnhanceMode::NoEnhance;
    }
}

fn apply_detect_flags(config: &mut PipelineConfig, flags: &DetectFlags) {
    if let Some(w) = flags.window_ms {
        config.detect.window_ms = w;
    }
    if let Some(s) = flags.stride_ms {
        config.detect.stride_ms = s;
    }
    if let Some(g) = flags.grid {
        config.detect.grid = g;
    }
}

fn guess_format(path: &Path, explicit: Option<CaptureFormat>) -> CaptureFormat {
    explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => CaptureFormat::Csv,
        _ => CaptureFormat::JsonFrames,
    })
}

struct Capture {
    frames: Vec<Frame>,
    setup: SensorSetup,
    scenario: ScenarioDescriptor,
}

/// Reads a capture; an empty one yields no frames rather than an error.
fn read_capture(path: &Path, format: Option<CaptureFormat>, setup: &SensorSetup) -> Result<Capture> {
    let bytes = fs::read(path)?;
    match parse_capture(&bytes, guess_format(path, format), setup) {
        Ok(p) => {
            if !p.rejected.is_empty() {
                log::warn!("{} points failed validation and were dropped", p.rejected.len());
            }
            Ok(Capture {
                frames: p.frames,
                setup: p.setup,
                scenario: p.scenario.unwrap_or_default(),
            })
        }
        Err(Error::EmptyCapture) => Ok(Capture {
            frames: Vec::new(),
            setup: setup.clone(),
            scenario: ScenarioDescriptor::default(),
        }),
        Err(e) => Err(e),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

fn write_capture(dir: &Path, stem: &str, c: &Capture, format: CaptureFormat) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (name, bytes) = match format {
        CaptureFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(&mut buf, &c.frames)?;
            (format!("{stem}.csv"), buf)
        }
        CaptureFormat::JsonFrames => {
            let mut buf = Vec::new();
            write_jsonframes(&mut buf, &c.frames, &c.setup, &c.scenario)?;
            (format!("{stem}.jsonframes"), buf)
        }
    };
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    Ok(path)
}

fn read_spec(path: &Path) -> Result<SceneSpec> {
    let spec: SceneSpec =
        serde_json::from_slice(&fs::read(path)?).map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

fn synth(a: SynthArgs) -> Result<()> {
    let config = load_config(a.common.config.as_deref())?;
    let mut spec = read_spec(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let (frames, truth) = generate_scene(&spec, &config.setup)?;
    let capture = Capture { frames, setup: config.setup.clone(), scenario: spec.scenario };
    let path = write_capture(&a.common.out, "capture", &capture, a.format)?;
    write_json(&a.common.out, "truth.json", &truth)?;
    println!("{}", path.display());
    Ok(())
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    let mut config = load_config(a.common.config.as_deref())?;
    apply_mode(&mut config, &a.mode);
    let agent = make_agent(&a.agent)?;
    let capture = read_capture(&a.input.input, a.input.format, &config.setup)?;
    let out = thread_pool(a.jobs)?.install(|| {
        enhance_frames(&capture.frames, agent.as_ref(), &capture.setup, &capture.scenario, &config.enhance, a.trace)
    })?;
    let enhanced = Capture { frames: out.frames, ..capture };
    let path = write_capture(&a.common.out, "enhanced", &enhanced, CaptureFormat::JsonFrames)?;
    write_json(
        &a.common.out,
        "enhance_report.json",
        &serde_json::json!({
            "mode": config.enhance.mode,
            "agent": agent.name(),
            "reproducible": agent.is_deterministic(),
            "windows": out.windows,
        }),
    )?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct HeatmapSidecar<'a> {
    window_start_ms: u64,
    extent: mmcount::heatmap::Extent,
    grid_shape: (usize, usize),
    counts: &'a [u64],
    density: &'a [f64],
}

fn detect(a: DetectArgs) -> Result<()> {
    let mut config = load_config(a.common.config.as_deref())?;
    apply_detect_flags(&mut config, &a.flags);
    let agent = make_agent(&a.agent)?;
    let capture = read_capture(&a.input.input, a.input.format, &config.setup)?;
    let report = thread_pool(a.jobs)?.install(|| detect_frames(&capture.frames, agent.as_ref(), &config.detect))?;
    if a.heatmaps && !capture.frames.is_empty() {
        let dir = a.common.out.join("heatmaps");
        fs::create_dir_all(&dir)?;
        for w in window_sliding(&capture.frames, config.detect.window_ms, config.detect.stride_ms)? {
            let (hm, _) = Heatmap::from_window(&w, config.detect.extent, config.detect.grid)?;
            fs::write(dir.join(format!("window_{:08}.png", w.start_ms)), render(&hm, ColorScale::Auto)?)?;
            let sidecar = HeatmapSidecar {
                window_start_ms: w.start_ms,
                extent: hm.extent,
                grid_shape: (hm.rows, hm.cols),
                counts: &hm.counts,
                density: &hm.density,
            };
            write_json(&dir, &format!("window_{:08}.json", w.start_ms), &sidecar)?;
        }
    }
    let path = write_json(&a.common.out, "detections.json", &report)?;
    println!("{}", path.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut config = load_config(a.common.config.as_deref())?;
    if let Some(levels) = a.levels {
        config.game_levels = levels;
    }
    let report: Vec<WindowDetections> = serde_json::from_slice(&fs::read(&a.detections)?)?;
    let truth: GroundTruth = serde_json::from_slice(&fs::read(&a.truth)?)?;
    let samples = protocol_samples(&truth, &config.protocol);
    let (evaluation, _) = evaluate_report(&report, &samples, &config)?;
    let path = write_json(&a.common.out, "eval.json", &evaluation)?;
    println!("{}", path.display());
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut config = load_config(a.common.config.as_deref())?;
    apply_mode(&mut config, &a.mode);
    apply_detect_flags(&mut config, &a.flags);
    let agent = make_agent(&a.agent)?;
    let pool = thread_pool(a.jobs)?;
    let jobs = pool.current_num_threads();

    let (report, manifest) = match (&a.spec, &a.input) {
        (Some(spec_path), _) => {
            let spec = read_spec(spec_path)?;
            let run = pool.install(|| run_synthetic(&spec, a.seed, agent.as_ref(), &config))?;
            let manifest = RunManifest { jobs, ..run.manifest };
            (run.report, manifest)
        }
        (None, Some(input)) => {
            let t = Instant::now();
            let capture = read_capture(input, a.format, &config.setup)?;
            let truth_path = a.truth.as_ref().ok_or_else(|| Error::InvalidParameter("--input needs --truth".into()))?;
            let truth: GroundTruth = serde_json::from_slice(&fs::read(truth_path)?)?;
            let mut timings = StageTimings::new();
            timings.insert("ingest".into(), t.elapsed().as_secs_f64() * 1e3);
            let samples = protocol_samples(&truth, &config.protocol);
            let config = PipelineConfig { setup: capture.setup.clone(), ..config.clone() };
            let report = pool.install(|| {
                run_samples(&capture.frames, &samples, agent.as_ref(), &capture.scenario, &config, &mut timings)
            })?;
            let manifest = RunManifest {
                version: env!("CARGO_PKG_VERSION").into(),
                seed: a.seed,
                agent: agent.name().into(),
                reproducible: agent.is_deterministic(),
                scene: SceneSpec { scenario: capture.scenario, ..SceneSpec::default() },
                config,
                jobs,
                stage_ms: timings,
            };
            (report, manifest)
        }
        (None, None) => return Err(Error::InvalidParameter("one of --spec or --input is required".into())),
    };

    write_json(&a.common.out, "manifest.json", &manifest)?;
    write_json(&a.common.out, "samples.json", &report.samples)?;
    let path = write_json(&a.common.out, "report.json", &report.evaluation)?;
    println!("{}", path.display());
    Ok(())
}
