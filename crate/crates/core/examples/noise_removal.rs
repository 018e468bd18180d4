//! Removes clutter from one synthetic window with the heuristic agent and
//! compares the result with the generator's labels.
//!
//! `cargo run --example noise_removal`

use mmcount::agent::{HeuristicAgent, TokenizerConfig};
use mmcount::ingestion::window_fixed;
use mmcount::model::{ScenarioDescriptor, SensorSetup};
use mmcount::noise_removal::remove_noise;
use mmcount::synth::{generate_scene, SceneSpec};

fn main() -> mmcount::Result<()> {
    let spec = SceneSpec { duration_s: 1.0, noise_rate: 20.0, ..SceneSpec::three_person() };
    let setup = SensorSetup::default();
    let (frames, truth) = generate_scene(&spec, &setup)?;
    let window = window_fixed(&frames, 200)?.remove(0);

    let labels: Vec<bool> = truth.frames.iter().take(window.frames.len()).flat_map(|f| f.noise.iter().copied()).collect();
    let noise = labels.iter().filter(|&&n| n).count();
    println!("window: {} points, {} of them clutter", window.point_count(), noise);

    let (clean, report) =
        remove_noise(&window, &HeuristicAgent::default(), &setup, &ScenarioDescriptor::default(), &TokenizerConfig::default())?;
    println!(
        "kept {}, dropped {}, mean confidence {:.2}, fallback {}",
        report.kept, report.dropped, report.mean_confidence, report.fallback
    );
    println!("clean window has {} points", clean.point_count());
    Ok(())
}
