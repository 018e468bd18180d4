//! Capture parsing and time windowing.
//!
//! Two interchange formats are understood:
//!
//! * **csv**: one point per line, columns
//!   `frame_index,timestamp_ms,x,y,z,doppler,energy`. A header line is
//!   optional and recognised by a non-numeric first field.
//! * **jsonframes**: a single document
//!   `{"setup": .., "scenario": .., "frames": [{"index", "timestamp_ms", "points": [[x,y,z,doppler,energy], ..]}, ..]}`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_point, CloudWindow, Frame, RadarPoint, RejectReason, ScenarioDescriptor, SensorSetup,
    ValidationVerdict,
};

/// Default stride of the sliding detection windows (50% overlap at 200 ms).
pub const DEFAULT_STRIDE_MS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureFormat {
    Csv,
    JsonFrames,
}

impl std::str::FromStr for CaptureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonframes" | "json" => Ok(Self::JsonFrames),
            other => Err(Error::InvalidParameter(format!("unknown capture format `{other}`"))),
        }
    }
}

/// A point that failed validation, with its location in the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedPoint {
    /// 1-based line for csv, 0-based frame index for jsonframes.
    pub location: usize,
    pub frame_index: u64,
    pub point: RadarPoint,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCapture {
    pub frames: Vec<Frame>,
    /// Setup embedded in a jsonframes document, otherwise the one supplied by the caller.
    pub setup: SensorSetup,
    pub scenario: Option<ScenarioDescriptor>,
    pub rejected: Vec<RejectedPoint>,
    /// True when the input was not in timestamp order.
    pub resorted: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonFrame {
    index: u64,
    timestamp_ms: u64,
    points: Vec<[f64; 5]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonCapture {
    setup: SensorSetup,
    scenario: ScenarioDescriptor,
    frames: Vec<JsonFrame>,
}

/// Parses a capture and validates every point against the setup.
///
/// Invalid points are removed from the frames and listed in
/// [`ParsedCapture::rejected`]. For jsonframes input the embedded setup takes
/// precedence over `setup`.
pub fn parse_capture(bytes: &[u8], format: CaptureFormat, setup: &SensorSetup) -> Result<ParsedCapture> {
    match format {
        CaptureFormat::Csv => parse_csv(bytes, setup),
        CaptureFormat::JsonFrames => parse_jsonframes(bytes),
    }
}

fn parse_csv(bytes: &[u8], setup: &SensorSetup) -> Result<ParsedCapture> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedRecord {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;

    // frame index -> (timestamp, points, first line seen)
    let mut frames: BTreeMap<u64, (u64, Vec<RadarPoint>, usize)> = BTreeMap::new();
    let mut rejected = Vec::new();
    let mut arrival = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields[0].parse::<f64>().is_err() {
            continue;
        }
        if fields.len() != 7 {
            return Err(Error::MalformedRecord {
                line: line_no,
                reason: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let index: u64 = fields[0].parse().map_err(|_| Error::MalformedRecord {
            line: line_no,
            reason: format!("bad frame index `{}`", fields[0]),
        })?;
        let timestamp: u64 = fields[1].parse().map_err(|_| Error::MalformedRecord {
            line: line_no,
            reason: format!("bad timestamp `{}`", fields[1]),
        })?;
        let mut v = [0.0; 5];
        for (slot, f) in v.iter_mut().zip(&fields[2..]) {
            *slot = f.parse().map_err(|_| Error::MalformedRecord {
                line: line_no,
                reason: format!("bad number `{f}`"),
            })?;
        }
        let point = RadarPoint::new(v[0], v[1], v[2], v[3], v[4]);

        let entry = frames.entry(index).or_insert_with(|| {
            arrival.push(timestamp);
            (timestamp, Vec::new(), line_no)
        });
        if entry.0 != timestamp {
            return Err(Error::MalformedRecord {
                line: line_no,
                reason: format!(
                    "frame {index} has timestamp {timestamp} but line {} gave {}",
                    entry.2, entry.0
                ),
            });
        }
        match validate_point(&point, setup) {
            ValidationVerdict::Accept => entry.1.push(point),
            ValidationVerdict::Reject(reason) => rejected.push(RejectedPoint {
                location: line_no,
                frame_index: index,
                point,
                reason,
            }),
        }
    }

    if frames.is_empty() {
        return Err(Error::EmptyCapture);
    }
    let resorted = arrival.windows(2).any(|w| w[1] < w[0]);
    let frames = frames
        .into_iter()
        .map(|(index, (ts, points, _))| Frame::new(index, ts, points))
        .collect();
    finish(frames, setup.clone(), None, rejected, resorted)
}

fn parse_jsonframes(bytes: &[u8]) -> Result<ParsedCapture> {
    let doc: JsonCapture = serde_json::from_slice(bytes).map_err(|e| Error::MalformedRecord {
        line: e.line(),
        reason: e.to_string(),
    })?;
    doc.setup.validate()?;
    if doc.frames.is_empty() {
        return Err(Error::EmptyCapture);
    }
    let resorted = doc.frames.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms);
    let mut rejected = Vec::new();
    let frames = doc
        .frames
        .into_iter()
        .enumerate()
        .map(|(pos, jf)| {
            let mut points = Vec::with_capacity(jf.points.len());
            for [x, y, z, d, e] in jf.points {
                let p = RadarPoint::new(x, y, z, d, e);
                match validate_point(&p, &doc.setup) {
                    ValidationVerdict::Accept => points.push(p),
                    ValidationVerdict::Reject(reason) => rejected.push(RejectedPoint {
                        location: pos,
                        frame_index: jf.index,
                        point: p,
                        reason,
                    }),
                }
            }
            Frame::new(jf.index, jf.timestamp_ms, points)
        })
        .collect();
    finish(frames, doc.setup, Some(doc.scenario), rejected, resorted)
}

fn finish(
    mut frames: Vec<Frame>,
    setup: SensorSetup,
    scenario: Option<ScenarioDescriptor>,
    rejected: Vec<RejectedPoint>,
    resorted: bool,
) -> Result<ParsedCapture> {
    frames.sort_by_key(|f| (f.timestamp_ms, f.index));
    if let Some(w) = frames.windows(2).find(|w| w[0].timestamp_ms == w[1].timestamp_ms) {
        return Err(Error::MalformedRecord {
            line: 0,
            reason: format!(
                "frames {} and {} share timestamp {}",
                w[0].index, w[1].index, w[0].timestamp_ms
            ),
        });
    }
    if resorted {
        log::warn!("capture frames were out of timestamp order and have been re-sorted");
    }
    if !rejected.is_empty() {
        log::warn!("{} points failed validation", rejected.len());
    }
    Ok(ParsedCapture {
        frames,
        setup,
        scenario,
        rejected,
        resorted,
    })
}

pub fn write_csv<W: Write>(mut out: W, frames: &[Frame]) -> Result<()> {
    writeln!(out, "frame_index,timestamp_ms,x,y,z,doppler,energy")?;
    for f in frames {
        for p in &f.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                f.index, f.timestamp_ms, p.x, p.y, p.z, p.doppler, p.energy
            )?;
        }
    }
    Ok(())
}

pub fn write_jsonframes<W: Write>(
    out: W,
    frames: &[Frame],
    setup: &SensorSetup,
    scenario: &ScenarioDescriptor,
) -> Result<()> {
    let doc = JsonCapture {
        setup: setup.clone(),
        scenario: *scenario,
        frames: frames
            .iter()
            .map(|f| JsonFrame {
                index: f.index,
                timestamp_ms: f.timestamp_ms,
                points: f.points.iter().map(|p| [p.x, p.y, p.z, p.doppler, p.energy]).collect(),
            })
            .collect(),
    };
    serde_json::to_writer(out, &doc)?;
    Ok(())
}

/// Partitions timestamp-sorted frames into consecutive non-overlapping windows
/// starting at the first frame. Quiet intervals yield empty windows and the
/// trailing partial window is kept.
pub fn window_fixed(frames: &[Frame], duration_ms: u64) -> Result<Vec<CloudWindow>> {
    window_sliding(frames, duration_ms, duration_ms)
}

/// Overlapping windows: window `k` starts `k * stride_ms` after the first
/// frame, and windows are emitted while their start does not pass the last
/// frame.
pub fn window_sliding(frames: &[Frame], duration_ms: u64, stride_ms: u64) -> Result<Vec<CloudWindow>> {
    if duration_ms == 0 {
        return Err(Error::InvalidWindow("duration must be positive".into()));
    }
    if stride_ms == 0 || stride_ms > duration_ms {
        return Err(Error::InvalidStride {
            stride: stride_ms,
            duration: duration_ms,
        });
    }
    let (first, last) = match (frames.first(), frames.last()) {
        (Some(a), Some(b)) => (a.timestamp_ms, b.timestamp_ms),
        _ => return Err(Error::EmptyCapture),
    };
    if frames.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
        return Err(Error::InvalidWindow("frames must be sorted by timestamp".into()));
    }

    let mut windows = Vec::new();
    let mut lo = 0;
    let mut start = first;
    while start <= last {
        let end = start + duration_ms;
        while lo < frames.len() && frames[lo].timestamp_ms < start {
            lo += 1;
        }
        let hi = lo + frames[lo..].partition_point(|f| f.timestamp_ms < end);
        windows.push(CloudWindow::new(start, duration_ms, frames[lo..hi].to_vec())?);
        start += stride_ms;
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frames_at(ts: &[u64]) -> Vec<Frame> {
        ts.iter()
            .enumerate()
            .map(|(i, &t)| Frame::new(i as u64, t, vec![RadarPoint::new(0.0, 1.0, 0.0, 0.0, 1.0)]))
            .collect()
    }

    fn starts(ws: &[CloudWindow]) -> Vec<u64> {
        ws.iter().map(|w| w.start_ms).collect()
    }

    fn stamps(w: &CloudWindow) -> Vec<u64> {
        w.frames.iter().map(|f| f.timestamp_ms).collect()
    }

    #[test]
    fn csv_line_maps_to_single_point_frame() {
        let cap = parse_capture(b"0,0,1.0,0.0,0.0,0.0,6.0\n", CaptureFormat::Csv, &SensorSetup::default()).unwrap();
        assert_eq!(cap.frames.len(), 1);
        assert_eq!(cap.frames[0].index, 0);
        assert_eq!(cap.frames[0].timestamp_ms, 0);
        assert_eq!(cap.frames[0].points, vec![RadarPoint::new(1.0, 0.0, 0.0, 0.0, 6.0)]);
        assert!(!cap.resorted);
    }

    #[test]
    fn csv_out_of_order_frames_are_resorted() {
        let csv = "frame_index,timestamp_ms,x,y,z,doppler,energy\n\
                   2,200,0,1,0,0,1\n0,0,0,1,0,0,1\n1,100,0,2,0,0,1\n";
        let cap = parse_capture(csv.as_bytes(), CaptureFormat::Csv, &SensorSetup::default()).unwrap();
        assert_eq!(cap.frames.iter().map(|f| f.timestamp_ms).collect::<Vec<_>>(), vec![0, 100, 200]);
        assert!(cap.resorted);
    }

    #[test]
    fn csv_wrong_arity_is_malformed() {
        let err = parse_capture(b"0,0,1.0,0.0\n", CaptureFormat::Csv, &SensorSetup::default()).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn csv_invalid_points_are_reported() {
        let csv = "0,0,1,0,0,0,5\n0,0,60,0,0,0,5\n0,0,1,0,0,0,-2\n";
        let cap = parse_capture(csv.as_bytes(), CaptureFormat::Csv, &SensorSetup::default()).unwrap();
        assert_eq!(cap.frames[0].points.len(), 1);
        let reasons: Vec<_> = cap.rejected.iter().map(|r| (r.location, r.reason)).collect();
        assert_eq!(
            reasons,
            vec![(2, RejectReason::RangeExceeded), (3, RejectReason::NegativeEnergy)]
        );
    }

    #[test]
    fn empty_csv_is_empty_capture() {
        let err = parse_capture(b"frame_index,timestamp_ms,x,y,z,doppler,energy\n", CaptureFormat::Csv, &SensorSetup::default())
            .unwrap_err();
        assert!(matches!(err, Error::EmptyCapture));
    }

    #[test]
    fn jsonframes_round_trip() {
        let frames = vec![
            Frame::new(0, 0, vec![RadarPoint::new(0.5, 1.0, 0.1, 0.01, 3.5)]),
            Frame::new(1, 100, vec![]),
        ];
        let mut buf = Vec::new();
        write_jsonframes(&mut buf, &frames, &SensorSetup::default(), &ScenarioDescriptor::default()).unwrap();
        let cap = parse_capture(&buf, CaptureFormat::JsonFrames, &SensorSetup::default()).unwrap();
        assert_eq!(cap.frames, frames);
        assert_eq!(cap.scenario, Some(ScenarioDescriptor::default()));
    }

    #[test]
    fn fixed_windows_split_on_half_open_intervals() {
        let ws = window_fixed(&frames_at(&[0, 50, 100, 150, 200, 250]), 200).unwrap();
        assert_eq!(starts(&ws), vec![0, 200]);
        assert_eq!(stamps(&ws[0]), vec![0, 50, 100, 150]);
        assert_eq!(stamps(&ws[1]), vec![200, 250]);
    }

    #[test]
    fn single_frame_gives_one_window() {
        assert_eq!(window_fixed(&frames_at(&[0]), 200).unwrap().len(), 1);
    }

    #[test]
    fn zero_duration_is_rejected() {
        assert!(window_fixed(&frames_at(&[0]), 0).is_err());
    }

    #[test]
    fn sliding_windows_overlap_by_duration_minus_stride() {
        let ws = window_sliding(&frames_at(&[0, 50, 100, 150, 200, 250, 300, 350]), 200, 100).unwrap();
        assert_eq!(starts(&ws), vec![0, 100, 200, 300]);
        assert_eq!(stamps(&ws[1]), vec![100, 150, 200, 250]);
        assert_eq!(stamps(&ws[3]), vec![300, 350]);
    }

    #[test]
    fn stride_equal_to_duration_matches_fixed() {
        let fr = frames_at(&[0, 30, 220, 410, 999]);
        assert_eq!(window_sliding(&fr, 200, 200).unwrap(), window_fixed(&fr, 200).unwrap());
    }

    #[test]
    fn stride_larger_than_duration_is_rejected() {
        let err = window_sliding(&frames_at(&[0]), 200, 300).unwrap_err();
        assert!(matches!(err, Error::InvalidStride { stride: 300, duration: 200 }));
        assert!(matches!(window_sliding(&frames_at(&[0]), 200, 0), Err(Error::InvalidStride { .. })));
    }

    fn sorted_stamps() -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::btree_set(0u64..5_000, 1..60).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn fixed_windows_partition_frames(ts in sorted_stamps(), dur in 1u64..700) {
            let fr = frames_at(&ts);
            let ws = window_fixed(&fr, dur).unwrap();
            let all: Vec<u64> = ws.iter().flat_map(stamps).collect();
            prop_assert_eq!(all, ts);
        }

        #[test]
        fn sliding_windows_bound_multiplicity(ts in sorted_stamps(), dur in 1u64..700, frac in 0.01f64..=1.0) {
            let stride = ((dur as f64 * frac).ceil() as u64).clamp(1, dur);
            let fr = frames_at(&ts);
            let ws = window_sliding(&fr, dur, stride).unwrap();
            let bound = dur.div_ceil(stride) as usize;
            for t in &ts {
                let hits = ws.iter().filter(|w| stamps(w).contains(t)).count();
                prop_assert!(hits >= 1 && hits <= bound);
            }
        }
    }
}
