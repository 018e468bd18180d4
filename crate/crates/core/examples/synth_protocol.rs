//! Generates a ground-truthed scene and lists the evaluation samples.
//!
//! `cargo run --example synth_protocol`

use mmcount::model::SensorSetup;
use mmcount::synth::{protocol_run, ProtocolConfig, SceneSpec};

fn main() -> mmcount::Result<()> {
    let spec = SceneSpec::three_person();
    let run = protocol_run(&spec, &SensorSetup::default(), &ProtocolConfig::default())?;
    let points: usize = run.frames.iter().map(|f| f.points.len()).sum();
    println!("{} frames, {points} points", run.frames.len());
    for seat in &run.truth.seats {
        println!("seat at ({:.2}, {:.2}), {:.2} m from the sensor", seat.x, seat.y, seat.range());
    }
    for s in &run.samples {
        println!("tick {}: [{} ms, {} ms) {} people, {} frames", s.tick, s.start_ms, s.end_ms, s.truth.len(), s.frames(&run.frames).len());
    }
    Ok(())
}
