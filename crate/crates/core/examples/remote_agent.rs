//! Runs the pipeline against an agent service named by `MMCOUNT_AGENT_URL`,
//! falling back to the built-in heuristic when the variable is unset.
//!
//! `MMCOUNT_AGENT_URL=http://localhost:8080 cargo run --release --example remote_agent`

use mmcount::agent::agent_from_env;
use mmcount::pipeline::{run_synthetic, PipelineConfig};
use mmcount::synth::SceneSpec;

fn main() -> mmcount::Result<()> {
    env_logger::init();
    let agent = agent_from_env();
    println!("agent: {}", agent.name());
    let mut config = PipelineConfig::default();
    config.protocol.session_s = 20.0;
    let run = run_synthetic(&SceneSpec::three_person(), 0, agent.as_ref(), &config)?;
    println!("{}", serde_json::to_string_pretty(&run.report.evaluation)?);
    Ok(())
}
