//! Scores hand-made predictions with GAME at several grid levels.
//!
//! `cargo run --example evaluate_game`

use mmcount::heatmap::Extent;
use mmcount::metrics::{evaluate, GameSample};

fn main() -> mmcount::Result<()> {
    let extent = Extent::room();
    let truth = vec![(-0.4, 0.4), (0.4, 1.1), (-0.5, 1.7)];
    let samples = vec![
        // Right count, one person placed in the wrong quadrant.
        GameSample { extent, predicted: vec![(-0.4, 0.4), (0.4, 1.1), (0.5, 1.7)], truth: truth.clone() },
        // One person missed.
        GameSample { extent, predicted: vec![(-0.4, 0.4), (0.4, 1.1)], truth },
    ];
    let report = evaluate(&samples, None, &extent, &[0, 1, 2, 3])?;
    for (level, value) in &report.game {
        println!("GAME({level}) = {value:.2}");
    }
    println!("accuracy {:.2}, MAE {:.2}", report.accuracy, report.mae);
    Ok(())
}
