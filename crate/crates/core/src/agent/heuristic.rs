use serde::{Deserialize, Serialize};

use super::tokenize::{decode_raw_points, QuantizedPoint, TokenSequence};
use super::{Agent, NoiseMask, Proposal};
use crate::compensation::{seed_strategies, CompensationStateSummary, CompensationStrategy, SECTORS};
use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::model::{CrowdDensity, Detection};

/// Tunables of the offline agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// Neighbourhood radius of the density rule, meters.
    pub epsilon_m: f64,
    /// A point with at least `min_cluster - 1` neighbours is kept.
    pub min_cluster: usize,
    /// Energy percentile above which points are kept in sparse scenes.
    pub sparse_percentile: f64,
    /// Same for dense scenes.
    pub dense_percentile: f64,
    /// Exponent spacing between refinement proposals.
    pub alpha_step: f64,
    /// Smallest component, in cells, that counts as an individual.
    pub min_component_cells: usize,
    /// Radius, in cells, of the neighbourhood sum taken before thresholding.
    pub smoothing_cells: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            epsilon_m: 0.3,
            min_cluster: 4,
            sparse_percentile: 60.0,
            dense_percentile: 40.0,
            alpha_step: 0.1,
            min_component_cells: 2,
            smoothing_cells: 1,
        }
    }
}

/// Deterministic stand-in for the multimodal model.
///
/// * noise: a point survives if its energy reaches a scenario-dependent
///   percentile of the window or it has enough neighbours within `epsilon_m`;
/// * strategies: the seed set on raw data, otherwise exponents around the
///   value implied by the residual log-log slope of the energy profile;
/// * detection: densities are summed over a small neighbourhood, cells at or
///   above mean + 1 sd of the non-zero sums are grouped into 8-connected
///   components, and each component is one individual placed at the centroid
///   of the raw densities under it.
#[derive(Debug, Clone, Default)]
pub struct HeuristicAgent {
    pub config: HeuristicConfig,
}

impl HeuristicAgent {
    pub fn new(config: HeuristicConfig) -> Self {
        Self { config }
    }

    fn percentile_for(&self, seq: &TokenSequence) -> f64 {
        match seq.scenario_value("crowd_density").and_then(CrowdDensity::parse) {
            Some(CrowdDensity::Dense) => self.config.dense_percentile,
            _ => self.config.sparse_percentile,
        }
    }

    fn classify_points(&self, points: &[QuantizedPoint], percentile: f64) -> (Vec<bool>, Vec<f64>) {
        let n = points.len();
        if n == 0 {
            return (Vec::new(), Vec::new());
        }
        let mut bins: Vec<u32> = points.iter().map(|p| p.energy_bin).collect();
        bins.sort_unstable();
        // Nearest-rank percentile.
        let rank = ((percentile / 100.0) * n as f64).ceil().max(1.0) as usize;
        let threshold = bins[rank.min(n) - 1];

        let eps2 = self.config.epsilon_m * self.config.epsilon_m;
        let needed = self.config.min_cluster.saturating_sub(1);
        let mut keep = Vec::with_capacity(n);
        let mut confidence = Vec::with_capacity(n);
        for (i, p) in points.iter().enumerate() {
            let neighbours = points
                .iter()
                .enumerate()
                .filter(|&(j, q)| {
                    j != i && (p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2) <= eps2
                })
                .count();
            let below = bins.partition_point(|&b| b < p.energy_bin);
            let energy_support = if p.energy_bin >= threshold { 1.0 } else { below as f64 / n as f64 };
            let density_support = if needed == 0 { 1.0 } else { (neighbours as f64 / needed as f64).min(1.0) };
            let support = energy_support.max(density_support);
            let k = p.energy_bin >= threshold || neighbours >= needed;
            keep.push(k);
            confidence.push(if k { 0.5 + 0.5 * support } else { 1.0 - 0.5 * support });
        }
        (keep, confidence)
    }

    /// Sum of densities over the `(2k+1) x (2k+1)` neighbourhood of each cell.
    fn smoothed(&self, grid: &Heatmap) -> Vec<f64> {
        let (rows, cols) = (grid.rows, grid.cols);
        let k = self.config.smoothing_cells;
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let mut sum = 0.0;
                for nr in r.saturating_sub(k)..=(r + k).min(rows - 1) {
                    for nc in c.saturating_sub(k)..=(c + k).min(cols - 1) {
                        sum += grid.density_at(nr, nc);
                    }
                }
                out[r * cols + c] = sum;
            }
        }
        out
    }

    fn detect(&self, grid: &Heatmap) -> Vec<Detection> {
        let smooth = self.smoothed(grid);
        let nonzero: Vec<f64> = smooth.iter().copied().filter(|&d| d > 0.0).collect();
        if nonzero.is_empty() {
            return Vec::new();
        }
        let mean = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
        let sd = (nonzero.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / nonzero.len() as f64).sqrt();
        let threshold = mean + sd;
        let max = nonzero.iter().copied().fold(0.0, f64::max);

        let (rows, cols) = (grid.rows, grid.cols);
        let hot = |r: usize, c: usize| {
            let d = smooth[r * cols + c];
            d > 0.0 && d >= threshold
        };
        let mut seen = vec![false; rows * cols];
        let mut detections = Vec::new();
        for r0 in 0..rows {
            for c0 in 0..cols {
                if seen[r0 * cols + c0] || !hot(r0, c0) {
                    continue;
                }
                let mut stack = vec![(r0, c0)];
                seen[r0 * cols + c0] = true;
                let mut cells = Vec::new();
                while let Some((r, c)) = stack.pop() {
                    cells.push((r, c));
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                            if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                                continue;
                            }
                            let (nr, nc) = (nr as usize, nc as usize);
                            if !seen[nr * cols + nc] && hot(nr, nc) {
                                seen[nr * cols + nc] = true;
                                stack.push((nr, nc));
                            }
                        }
                    }
                }
                if cells.len() < self.config.min_component_cells {
                    continue;
                }
                // Centroid of the raw densities under the component.
                let (mut wx, mut wy, mut mass, mut peak) = (0.0, 0.0, 0.0, 0.0f64);
                for &(r, c) in &cells {
                    let d = grid.density_at(r, c);
                    let (x, y) = grid.cell_center(r, c);
                    wx += d * x;
                    wy += d * y;
                    mass += d;
                    peak = peak.max(smooth[r * cols + c]);
                }
                if mass <= 0.0 {
                    continue;
                }
                detections.push(Detection::person(wx / mass, wy / mass, peak / max));
            }
        }
        detections
    }
}

impl Agent for HeuristicAgent {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn classify_noise(&self, seq: &TokenSequence) -> Result<NoiseMask> {
        let points = decode_raw_points(seq)
            .ok_or_else(|| Error::MalformedAgentReply("token sequence has an undecodable raw-data span".into()))?;
        if points.len() != seq.retained.len() {
            return Err(Error::MalformedAgentReply(format!(
                "{} decoded points for {} retained slots",
                points.len(),
                seq.retained.len()
            )));
        }
        let (keep_retained, conf_retained) = self.classify_points(&points, self.percentile_for(seq));
        // Points cut by the length cap are the weakest reflectors; drop them.
        let mut mask = NoiseMask {
            keep: vec![false; seq.total_points],
            confidence: vec![0.5; seq.total_points],
        };
        for ((&idx, k), c) in seq.retained.iter().zip(keep_retained).zip(conf_retained) {
            mask.keep[idx] = k;
            mask.confidence[idx] = c;
        }
        Ok(mask)
    }

    fn propose_strategies(&self, summary: &CompensationStateSummary, k: usize) -> Result<Vec<Proposal>> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let Some(applied) = summary.applied else {
            return Ok(seed_strategies()
                .into_iter()
                .take(k)
                .map(|strategy| Proposal { strategy, clamped: false })
                .collect());
        };

        // Energies currently scale as r^slope; a total exponent of
        // applied.alpha - slope would flatten them.
        let estimate = applied.alpha - summary.log_log_slope();
        let mut out: Vec<Proposal> = Vec::new();
        let mut offset = 0;
        while out.len() < k && offset <= 2 * k {
            let delta = match offset {
                0 => 0.0,
                o if o % 2 == 1 => -self.config.alpha_step * o.div_ceil(2) as f64,
                o => self.config.alpha_step * (o / 2) as f64,
            };
            offset += 1;
            let (strategy, clamped) = CompensationStrategy::clamped(estimate + delta, [1.0; SECTORS], applied.clip_db);
            if out.iter().all(|p| !p.strategy.approx_eq(&strategy, 1e-6)) {
                out.push(Proposal { strategy, clamped });
            }
        }
        Ok(out)
    }

    fn detect_crowd(&self, _image: &[u8], grid: &Heatmap) -> Result<Vec<Detection>> {
        Ok(self.detect(grid))
    }
}
