//! Per-window detection and temporal count smoothing.

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, HeuristicAgent};
use crate::error::{Error, Result};
use crate::heatmap::{render, ColorScale, Heatmap};
use crate::model::Detection;

/// Locates individuals on one window's heatmap. The agent sees the rendered
/// map; its positions are clamped into the map's extent. A malformed reply
/// falls back to the heuristic detector.
pub fn detect_window(hm: &Heatmap, agent: &dyn Agent) -> Result<Vec<Detection>> {
    if hm.total_count() == 0 {
        return Ok(Vec::new());
    }
    let image = render(hm, ColorScale::Auto)?;
    let detections = match agent.detect_crowd(&image, hm) {
        Ok(d) => d,
        Err(Error::MalformedAgentReply(reason)) => {
            log::warn!("agent `{}` sent unusable detections ({reason}); using heuristic", agent.name());
            HeuristicAgent::default().detect_crowd(&image, hm)?
        }
        Err(e) => return Err(e),
    };
    Ok(detections
        .into_iter()
        .map(|d| {
            let (x, y) = hm.extent.clamp(d.x, d.y);
            Detection { x, y, ..d }
        })
        .collect())
}

/// Number of overlapping windows that see any given instant.
pub fn lookback(duration_ms: u64, stride_ms: u64) -> usize {
    duration_ms.div_ceil(stride_ms.max(1)).max(1) as usize
}

/// Lower median over the `w` most recent raw counts (fewer at the start).
pub fn smooth_counts(raw: &[usize], w: usize) -> Vec<usize> {
    let w = w.max(1);
    (0..raw.len())
        .map(|k| {
            let mut recent = raw[(k + 1).saturating_sub(w)..=k].to_vec();
            recent.sort_unstable();
            recent[(recent.len() - 1) / 2]
        })
        .collect()
}

/// One line of a detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDetections {
    pub window_start_ms: u64,
    pub raw_count: usize,
    pub smoothed_count: usize,
    pub detections: Vec<Detection>,
}

/// Attaches smoothed counts to an ordered stream of per-window detections.
pub fn assemble_report(windows: Vec<(u64, Vec<Detection>)>, w: usize) -> Vec<WindowDetections> {
    let raw: Vec<usize> = windows.iter().map(|(_, d)| d.len()).collect();
    let smoothed = smooth_counts(&raw, w);
    windows
        .into_iter()
        .zip(smoothed)
        .map(|((start, detections), smoothed_count)| WindowDetections {
            window_start_ms: start,
            raw_count: detections.len(),
            smoothed_count,
            detections,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::{to_density, BinnedCounts, Extent};
    use crate::agent::{NoiseMask, Proposal, TokenSequence};
    use crate::compensation::CompensationStateSummary;
    use proptest::prelude::*;

    struct Garbage;

    impl Agent for Garbage {
        fn name(&self) -> &str {
            "garbage"
        }
        fn is_deterministic(&self) -> bool {
            true
        }
        fn classify_noise(&self, _: &TokenSequence) -> Result<NoiseMask> {
            Err(Error::MalformedAgentReply("x".into()))
        }
        fn propose_strategies(&self, _: &CompensationStateSummary, _: usize) -> Result<Vec<Proposal>> {
            Err(Error::MalformedAgentReply("x".into()))
        }
        fn detect_crowd(&self, _: &[u8], _: &Heatmap) -> Result<Vec<Detection>> {
            Err(Error::MalformedAgentReply("x".into()))
        }
    }

    struct FarAway;

    impl Agent for FarAway {
        fn name(&self) -> &str {
            "far"
        }
        fn is_deterministic(&self) -> bool {
            true
        }
        fn classify_noise(&self, _: &TokenSequence) -> Result<NoiseMask> {
            unreachable!()
        }
        fn propose_strategies(&self, _: &CompensationStateSummary, _: usize) -> Result<Vec<Proposal>> {
            unreachable!()
        }
        fn detect_crowd(&self, _: &[u8], _: &Heatmap) -> Result<Vec<Detection>> {
            Ok(vec![Detection::person(10.0, -4.0, 0.9)])
        }
    }

    fn blob_map() -> Heatmap {
        let mut counts = vec![0; 100];
        for i in [33, 34, 43, 44] {
            counts[i] = 80;
        }
        to_density(&BinnedCounts { rows: 10, cols: 10, counts, dropped: 0 }, Extent::room()).unwrap()
    }

    #[test]
    fn empty_map_has_no_detections() {
        let hm = Heatmap::empty(Extent::room(), (16, 16)).unwrap();
        assert!(detect_window(&hm, &HeuristicAgent::default()).unwrap().is_empty());
    }

    #[test]
    fn single_blob_gives_one_centroid_detection() {
        let hm = blob_map();
        let d = detect_window(&hm, &HeuristicAgent::default()).unwrap();
        assert_eq!(d.len(), 1);
        // Equal weights: centroid is the shared corner of the four cells.
        assert!((d[0].x - (-3.0 + 4.0 * 0.6)).abs() < 1e-9);
        assert!((d[0].y - 4.0 * 0.6).abs() < 1e-9);
    }

    #[test]
    fn malformed_reply_falls_back() {
        assert_eq!(detect_window(&blob_map(), &Garbage).unwrap().len(), 1);
    }

    #[test]
    fn positions_are_clamped_to_extent() {
        let d = detect_window(&blob_map(), &FarAway).unwrap();
        assert_eq!((d[0].x, d[0].y), (3.0, 0.0));
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth_counts(&[3, 3, 3, 3], 2), vec![3, 3, 3, 3]);
        assert_eq!(smooth_counts(&[3, 3, 7, 3, 3], 3), vec![3, 3, 3, 3, 3]);
        assert_eq!(smooth_counts(&[1, 5, 2, 8], 1), vec![1, 5, 2, 8]);
        assert_eq!(smooth_counts(&[4, 2], 2), vec![4, 2]);
        assert_eq!(lookback(200, 100), 2);
        assert_eq!(lookback(200, 200), 1);
        assert_eq!(lookback(200, 75), 3);
    }

    proptest! {
        #[test]
        fn smoothed_value_comes_from_lookback(raw in proptest::collection::vec(0usize..10, 1..40), w in 1usize..6) {
            let s = smooth_counts(&raw, w);
            prop_assert_eq!(s.len(), raw.len());
            for (k, v) in s.iter().enumerate() {
                prop_assert!(raw[(k + 1).saturating_sub(w)..=k].contains(v));
            }
        }

        #[test]
        fn constant_series_is_fixed_point(c in 0usize..10, n in 1usize..30, w in 1usize..6) {
            prop_assert_eq!(smooth_counts(&vec![c; n], w), vec![c; n]);
        }
    }
}
