//! Runs the three-person scene in all three enhancement modes over ten seeds.
//!
//! `cargo run --release --example ablation -- [noise_rate] [max_noise_energy]`

use mmcount::agent::HeuristicAgent;
use mmcount::pipeline::{run_synthetic, EnhanceMode, PipelineConfig};
use mmcount::synth::SceneSpec;

fn main() -> mmcount::Result<()> {
    let noise_rate: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let noise_max: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let spec = SceneSpec { noise_rate, noise_energy: (0.5, noise_max), ..SceneSpec::three_person() };
    let agent = HeuristicAgent::default();
    for mode in [EnhanceMode::Default, EnhanceMode::SwapOrder, EnhanceMode::NoEnhance] {
        let mut config = PipelineConfig::default();
        config.enhance.mode = mode;
        let (mut acc, mut game1) = (0.0, 0.0);
        for seed in 0..10 {
            let run = run_synthetic(&spec, seed, &agent, &config)?;
            let e = &run.report.evaluation;
            let counts: Vec<usize> = run.report.samples.iter().map(|s| s.result.predicted_count).collect();
            println!("{mode:?} seed {seed}: accuracy {:.2} GAME(1) {:.2} counts {counts:?}", e.accuracy, e.game["1"]);
            acc += e.accuracy / 10.0;
            game1 += e.game["1"] / 10.0;
        }
        println!("== {mode:?}: mean accuracy {acc:.3}, mean GAME(1) {game1:.3}");
    }
    Ok(())
}
