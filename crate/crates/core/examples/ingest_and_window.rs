//! Parses a small csv capture, reports rejected points and slices windows.
//!
//! `cargo run --example ingest_and_window`

use mmcount::ingestion::{parse_capture, window_fixed, window_sliding, CaptureFormat};
use mmcount::model::SensorSetup;

const CAPTURE: &str = "frame_index,timestamp_ms,x,y,z,doppler,energy
0,0,0.10,1.00,0.0,0.00,32.0
0,0,0.12,1.05,0.1,0.02,28.5
1,100,0.11,1.02,0.0,-0.01,30.1
1,100,9.00,60.0,0.0,0.00,5.0
1,100,0.30,1.50,0.0,0.00,-2.0
2,200,-0.50,1.80,0.2,0.01,12.0
3,300,-0.48,1.82,0.2,0.00,11.4
";

fn main() -> mmcount::Result<()> {
    let parsed = parse_capture(CAPTURE.as_bytes(), CaptureFormat::Csv, &SensorSetup::default())?;
    println!("{} frames, {} rejected points", parsed.frames.len(), parsed.rejected.len());
    for r in &parsed.rejected {
        println!("  line {}: {:?}", r.location, r.reason);
    }
    for w in window_fixed(&parsed.frames, 200)? {
        println!("fixed   [{:>4} ms, +{} ms): {} points", w.start_ms, w.duration_ms, w.point_count());
    }
    for w in window_sliding(&parsed.frames, 200, 100)? {
        println!("sliding [{:>4} ms, +{} ms): {} points", w.start_ms, w.duration_ms, w.point_count());
    }
    Ok(())
}
