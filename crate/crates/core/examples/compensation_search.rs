//! Searches for a power-compensation strategy on one window and prints the
//! rollout log.
//!
//! `cargo run --example compensation_search`

use mmcount::agent::HeuristicAgent;
use mmcount::compensation::{apply_strategy, CompensationStateSummary};
use mmcount::ingestion::window_fixed;
use mmcount::mcts::{run_search, SearchConfig};
use mmcount::model::{ScenarioDescriptor, SensorSetup};
use mmcount::synth::{generate_scene, SceneSpec};

fn main() -> mmcount::Result<()> {
    let spec = SceneSpec { duration_s: 1.0, noise_rate: 0.0, ..SceneSpec::three_person() };
    let setup = SensorSetup::default();
    let scenario = ScenarioDescriptor::default();
    let (frames, _) = generate_scene(&spec, &setup)?;
    let window = window_fixed(&frames, 200)?.remove(0);

    let config = SearchConfig { budget: 32, ..Default::default() };
    let out = run_search(&window, &HeuristicAgent::default(), &setup, &scenario, config)?;
    for r in &out.trace.rollouts {
        let alpha = r.strategy.map_or("none".to_string(), |s| format!("{:.2}", s.alpha));
        println!("rollout {:>2}: depth {} alpha {alpha:>5} score {:.3}", r.rollout, r.path.len() - 1, r.score.total);
    }
    println!("stopped: {:?}, tree size {}", out.trace.stop_reason, out.trace.tree_size);
    println!("best: {:?}", out.best_strategy);
    println!("score: {:?}", out.score);

    let before = CompensationStateSummary::from_window(&window, &setup, &scenario, None);
    let after = apply_strategy(&window, out.best_strategy.as_ref());
    let after = CompensationStateSummary::from_window(&after, &setup, &scenario, out.best_strategy);
    println!("log-log energy slope: {:.2} before, {:.2} after", before.log_log_slope(), after.log_log_slope());
    Ok(())
}
