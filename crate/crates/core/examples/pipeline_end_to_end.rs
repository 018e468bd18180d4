//! Runs the full pipeline on one synthetic session and prints the report.
//!
//! `cargo run --release --example pipeline_end_to_end -- [seed]`

use mmcount::agent::HeuristicAgent;
use mmcount::pipeline::{run_synthetic, PipelineConfig};
use mmcount::synth::SceneSpec;

fn main() -> mmcount::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let run = run_synthetic(&SceneSpec::three_person(), seed, &HeuristicAgent::default(), &PipelineConfig::default())?;
    for s in &run.report.samples {
        println!("tick {}: predicted {} truth {}", s.result.tick, s.result.predicted_count, s.result.truth_count);
    }
    println!("{}", serde_json::to_string_pretty(&run.report.evaluation)?);
    println!("stage timings (ms): {:?}", run.manifest.stage_ms);
    Ok(())
}
