//! Enhances a short capture, detects people on sliding-window heatmaps and
//! smooths the counts.
//!
//! `cargo run --release --example detect_and_smooth`

use mmcount::agent::HeuristicAgent;
use mmcount::detection::{assemble_report, detect_window, lookback};
use mmcount::heatmap::{Extent, Heatmap};
use mmcount::ingestion::window_sliding;
use mmcount::model::{ScenarioDescriptor, SensorSetup};
use mmcount::pipeline::{enhance_frames, EnhanceConfig};
use mmcount::synth::{generate_scene, SceneSpec};

fn main() -> mmcount::Result<()> {
    let spec = SceneSpec { duration_s: 3.0, ..SceneSpec::three_person() };
    let setup = SensorSetup::default();
    let (frames, _) = generate_scene(&spec, &setup)?;
    let agent = HeuristicAgent::default();
    let enhanced = enhance_frames(&frames, &agent, &setup, &ScenarioDescriptor::default(), &EnhanceConfig::default(), false)?;

    let mut per_window = Vec::new();
    for w in window_sliding(&enhanced.frames, 200, 100)? {
        let (hm, _) = Heatmap::from_window(&w, Extent::room(), (64, 64))?;
        per_window.push((w.start_ms, detect_window(&hm, &agent)?));
    }
    for line in assemble_report(per_window, lookback(200, 100)) {
        let at: Vec<String> = line.detections.iter().map(|d| format!("({:.2}, {:.2})", d.x, d.y)).collect();
        println!("{:>5} ms raw {} smoothed {} at {}", line.window_start_ms, line.raw_count, line.smoothed_count, at.join(" "));
    }
    Ok(())
}
