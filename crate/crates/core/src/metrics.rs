//! Counting accuracy and Grid Average Mean Error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::Extent;
use crate::model::Detection;

/// Predicted and true positions of one evaluation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSample {
    pub extent: Extent,
    pub predicted: Vec<(f64, f64)>,
    pub truth: Vec<(f64, f64)>,
}

impl GameSample {
    pub fn from_detections(extent: Extent, detections: &[Detection], truth: Vec<(f64, f64)>) -> Self {
        Self {
            extent,
            predicted: detections.iter().map(|d| (d.x, d.y)).collect(),
            truth,
        }
    }
}

fn cell_counts(points: &[(f64, f64)], extent: &Extent, side: usize) -> Vec<i64> {
    let mut counts = vec![0i64; side * side];
    for &(x, y) in points {
        if let Some((r, c)) = extent.cell_of(x, y, side, side) {
            counts[r * side + c] += 1;
        }
    }
    counts
}

/// GAME at `level`: each sample's extent is cut into `2^L x 2^L` cells, the
/// absolute differences of per-cell counts are summed, and the sums are
/// averaged over samples. Positions are unit masses; positions outside the
/// extent are not counted.
pub fn game(samples: &[GameSample], extent: &Extent, level: u32) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if level > 15 {
        return Err(Error::InvalidParameter(format!("GAME level {level} too fine")));
    }
    let side = 1usize << level;
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if s.extent != *extent {
            return Err(Error::MismatchedExtent(format!(
                "sample {i} uses {:?}, evaluation uses {extent:?}",
                s.extent
            )));
        }
        let p = cell_counts(&s.predicted, extent, side);
        let g = cell_counts(&s.truth, extent, side);
        total += p.iter().zip(&g).map(|(a, b)| (a - b).abs()).sum::<i64>() as f64;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingScore {
    /// Fraction of samples counted exactly.
    pub accuracy: f64,
    /// Mean absolute count error.
    pub mae: f64,
}

pub fn counting_accuracy(predicted: &[usize], truth: &[usize]) -> Result<CountingScore> {
    if predicted.is_empty() {
        return Err(Error::EmptySamples);
    }
    if predicted.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} predictions for {} ground-truth counts",
            predicted.len(),
            truth.len()
        )));
    }
    let n = predicted.len() as f64;
    let exact = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    let abs_err: usize = predicted.iter().zip(truth).map(|(p, t)| p.abs_diff(*t)).sum();
    Ok(CountingScore {
        accuracy: exact as f64 / n,
        mae: abs_err as f64 / n,
    })
}

/// Evaluation summary written by the pipeline and the `eval` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// GAME keyed by level.
    pub game: BTreeMap<String, f64>,
    pub accuracy: f64,
    pub mae: f64,
    pub n_samples: usize,
}

/// Scores a set of samples; counts are the number of predicted positions
/// unless `predicted_counts` overrides them (e.g. with smoothed counts).
pub fn evaluate(
    samples: &[GameSample],
    predicted_counts: Option<&[usize]>,
    extent: &Extent,
    levels: &[u32],
) -> Result<EvaluationReport> {
    let truth: Vec<usize> = samples.iter().map(|s| s.truth.len()).collect();
    let own: Vec<usize> = samples.iter().map(|s| s.predicted.len()).collect();
    let score = counting_accuracy(predicted_counts.unwrap_or(&own), &truth)?;
    let mut game_by_level = BTreeMap::new();
    for &l in levels {
        game_by_level.insert(l.to_string(), game(samples, extent, l)?);
    }
    Ok(EvaluationReport {
        game: game_by_level,
        accuracy: score.accuracy,
        mae: score.mae,
        n_samples: samples.len(),
    })
}
