//! Bins a window into a density map and writes it as a PNG.
//!
//! `cargo run --example heatmap_render -- [out.png]`

use mmcount::heatmap::{render, ColorScale, Extent, Heatmap};
use mmcount::ingestion::window_fixed;
use mmcount::synth::{generate_scene, SceneSpec};
use mmcount::model::SensorSetup;

fn main() -> mmcount::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "heatmap.png".into());
    let spec = SceneSpec { duration_s: 1.0, ..SceneSpec::three_person() };
    let (frames, _) = generate_scene(&spec, &SensorSetup::default())?;
    let window = window_fixed(&frames, 200)?.remove(0);

    let (hm, dropped) = Heatmap::from_window(&window, Extent::room(), (64, 64))?;
    println!("{} weighted counts binned, {dropped} outside the extent", hm.total_count());
    println!("peak density {:.1} per m^2", hm.max_density());
    std::fs::write(&out, render(&hm, ColorScale::Auto)?)?;
    println!("wrote {out}");
    Ok(())
}
