//! Distance-dependent power compensation.
//!
//! A [`CompensationStrategy`] rescales each point's energy by
//! `min(clip, (r / 1 m)^alpha) * sector_gain(azimuth)`, undoing free-space
//! attenuation. Strategies are scored on how uniform they make the
//! range-binned energy profile: effectiveness (relative drop in the
//! coefficient of variation), accuracy (closeness to a flat target) and
//! stability (consistency of accuracy over time slices).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CloudWindow, ScenarioDescriptor, SensorSetup};

pub const ALPHA_BOUNDS: (f64, f64) = (1.0, 3.0);
pub const SECTOR_GAIN_BOUNDS: (f64, f64) = (0.5, 2.0);
pub const CLIP_DB_BOUNDS: (f64, f64) = (0.0, 40.0);
/// Largest exponent change a refinement step may make.
pub const MAX_ALPHA_STEP: f64 = 0.5;
pub const SECTORS: usize = 8;
/// Reference range at which compensation gain is one.
pub const REFERENCE_RANGE_M: f64 = 1.0;
/// Clip used by the seed strategies.
pub const SEED_CLIP_DB: f64 = 20.0;
/// Range bins are this many range-resolution cells wide.
pub const RANGE_BIN_FACTOR: f64 = 4.0;

/// Free-space path loss in dB, `20 log10(4 pi d / lambda)`.
pub fn path_loss_db(distance: f64, wavelength: f64) -> Result<f64> {
    if !(distance > 0.0) || !(wavelength > 0.0) {
        return Err(Error::NonPositiveInput(format!(
            "distance {distance} m, wavelength {wavelength} m"
        )));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance / wavelength).log10())
}

/// A bounded parametric gain transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationStrategy {
    /// Distance exponent.
    pub alpha: f64,
    /// One multiplicative gain per 22.5 degree azimuth sector, left to right.
    pub sector_gains: [f64; SECTORS],
    /// Maximum distance boost, dB of power.
    pub clip_db: f64,
}

impl CompensationStrategy {
    pub fn new(alpha: f64, sector_gains: [f64; SECTORS], clip_db: f64) -> Result<Self> {
        let (s, clamped) = Self::clamped(alpha, sector_gains, clip_db);
        if clamped {
            return Err(Error::InvalidParameter(format!(
                "strategy out of bounds: alpha {alpha}, gains {sector_gains:?}, clip {clip_db} dB"
            )));
        }
        Ok(s)
    }

    /// Unit sector gains with the given exponent and clip.
    pub fn uniform(alpha: f64, clip_db: f64) -> Result<Self> {
        Self::new(alpha, [1.0; SECTORS], clip_db)
    }

    /// Clamps every parameter into its bounds. The flag reports whether
    /// anything had to change; NaNs are replaced by the lower bound.
    pub fn clamped(alpha: f64, sector_gains: [f64; SECTORS], clip_db: f64) -> (Self, bool) {
        let mut changed = false;
        let mut clamp = |v: f64, (lo, hi): (f64, f64)| {
            let c = if v.is_nan() { lo } else { v.clamp(lo, hi) };
            changed |= c != v;
            c
        };
        let alpha = clamp(alpha, ALPHA_BOUNDS);
        let sector_gains = sector_gains.map(|g| clamp(g, SECTOR_GAIN_BOUNDS));
        let clip_db = clamp(clip_db, CLIP_DB_BOUNDS);
        (
            Self {
                alpha,
                sector_gains,
                clip_db,
            },
            changed,
        )
    }

    pub fn is_within_bounds(&self) -> bool {
        !Self::clamped(self.alpha, self.sector_gains, self.clip_db).1
    }

    /// Refines `self` (the strategy already on the path) with a proposal:
    /// the exponent moves towards the proposal by at most [`MAX_ALPHA_STEP`],
    /// sector gains multiply and the proposal's clip replaces the current one.
    pub fn compose(&self, proposal: &CompensationStrategy) -> Self {
        let step = (proposal.alpha - self.alpha).clamp(-MAX_ALPHA_STEP, MAX_ALPHA_STEP);
        let mut gains = self.sector_gains;
        for (g, p) in gains.iter_mut().zip(proposal.sector_gains) {
            *g *= p;
        }
        Self::clamped(self.alpha + step, gains, proposal.clip_db).0
    }

    /// Parameter-wise equality within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.alpha - other.alpha).abs() <= tol
            && (self.clip_db - other.clip_db).abs() <= tol
            && self
                .sector_gains
                .iter()
                .zip(&other.sector_gains)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Linear power cap corresponding to `clip_db`.
    pub fn clip_linear(&self) -> f64 {
        10f64.powf(self.clip_db / 10.0)
    }

    /// Gain applied to a point at the given range and azimuth.
    pub fn gain(&self, range: f64, azimuth: f64) -> f64 {
        let distance_gain = (range / REFERENCE_RANGE_M).powf(self.alpha).min(self.clip_linear());
        distance_gain * self.sector_gains[sector_index(azimuth)]
    }
}

/// The three strategies an expansion starts from: exact free-space
/// compensation, then under- and over-compensation.
pub fn seed_strategies() -> [CompensationStrategy; 3] {
    [2.0, 1.5, 2.5].map(|alpha| CompensationStrategy {
        alpha,
        sector_gains: [1.0; SECTORS],
        clip_db: SEED_CLIP_DB,
    })
}

/// Sector of the front half-plane containing `azimuth` (radians from the
/// forward axis). Directions behind the sensor fold into the outermost sectors.
pub fn sector_index(azimuth: f64) -> usize {
    let half = std::f64::consts::FRAC_PI_2;
    let t = (azimuth.clamp(-half, half) + half) / std::f64::consts::PI;
    ((t * SECTORS as f64).floor() as usize).min(SECTORS - 1)
}

/// Applies a strategy to every point; `None` leaves the window unchanged.
pub fn apply_strategy(window: &CloudWindow, strategy: Option<&CompensationStrategy>) -> CloudWindow {
    match strategy {
        None => window.clone(),
        Some(s) => window.map_points(|p| p.with_energy(p.energy * s.gain(p.range(), p.azimuth()))),
    }
}

/// Condition of a (possibly compensated) window as seen by the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationStateSummary {
    /// Width of one range bin in meters.
    pub bin_width: f64,
    /// Mean energy per range bin; zero for empty bins.
    pub profile: Vec<f64>,
    /// Number of points per range bin.
    pub occupancy: Vec<u32>,
    /// Coefficient of variation over occupied bins.
    pub cv: f64,
    pub scenario: ScenarioDescriptor,
    pub setup_digest: String,
    /// Strategy already applied to the data, `None` for raw data.
    pub applied: Option<CompensationStrategy>,
}

impl CompensationStateSummary {
    /// Bins the window's points by range up to the sensor's maximum range.
    pub fn from_window(
        window: &CloudWindow,
        setup: &SensorSetup,
        scenario: &ScenarioDescriptor,
        applied: Option<CompensationStrategy>,
    ) -> Self {
        let bin_width = setup.range_resolution * RANGE_BIN_FACTOR;
        let bins = (setup.max_range / bin_width).ceil().max(1.0) as usize;
        let mut sums = vec![0.0; bins];
        let mut occupancy = vec![0u32; bins];
        for p in window.points() {
            let b = ((p.range() / bin_width) as usize).min(bins - 1);
            sums[b] += p.energy;
            occupancy[b] += 1;
        }
        let profile = sums
            .iter()
            .zip(&occupancy)
            .map(|(&s, &n)| if n > 0 { s / f64::from(n) } else { 0.0 })
            .collect();
        let mut summary = Self {
            bin_width,
            profile,
            occupancy,
            cv: 0.0,
            scenario: *scenario,
            setup_digest: setup.digest(),
            applied,
        };
        summary.cv = coefficient_of_variation(&summary.occupied_values());
        summary
    }

    /// A summary whose every bin is occupied by the given mean energies.
    pub fn from_profile(profile: Vec<f64>, bin_width: f64) -> Self {
        let occupancy = vec![1; profile.len()];
        let cv = coefficient_of_variation(&profile);
        Self {
            bin_width,
            profile,
            occupancy,
            cv,
            scenario: ScenarioDescriptor::default(),
            setup_digest: String::new(),
            applied: None,
        }
    }

    pub fn occupied_values(&self) -> Vec<f64> {
        self.profile
            .iter()
            .zip(&self.occupancy)
            .filter(|(_, &n)| n > 0)
            .map(|(&v, _)| v)
            .collect()
    }

    /// `(bin centre, mean energy, occupancy)` for occupied bins.
    pub fn occupied_bins(&self) -> impl Iterator<Item = (f64, f64, u32)> + '_ {
        self.profile
            .iter()
            .zip(&self.occupancy)
            .enumerate()
            .filter(|(_, (_, &n))| n > 0)
            .map(move |(i, (&v, &n))| ((i as f64 + 0.5) * self.bin_width, v, n))
    }

    /// Weighted least-squares slope of log energy against log range over
    /// occupied bins with positive energy. Zero when fewer than two usable bins.
    pub fn log_log_slope(&self) -> f64 {
        let pts: Vec<(f64, f64, f64)> = self
            .occupied_bins()
            .filter(|&(_, v, _)| v > 0.0)
            .map(|(r, v, n)| (r.ln(), v.ln(), f64::from(n)))
            .collect();
        let w: f64 = pts.iter().map(|p| p.2).sum();
        if pts.len() < 2 || w <= 0.0 {
            return 0.0;
        }
        let mx = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / w;
        let my = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / w;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
        if sxx <= f64::EPSILON {
            0.0
        } else {
            sxy / sxx
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    mean(&values.iter().map(|v| (v - m).powi(2)).collect::<Vec<_>>()).sqrt()
}

fn coefficient_of_variation(values: &[f64]) -> f64 {
    let m = mean(values);
    if m <= 0.0 {
        0.0
    } else {
        population_std(values) / m
    }
}

/// Relative reduction of the coefficient of variation, clamped to `[0, 1]`.
pub fn score_effectiveness(before: &CompensationStateSummary, after: &CompensationStateSummary) -> f64 {
    if before.cv <= 0.0 {
        return 0.0;
    }
    ((before.cv - after.cv) / before.cv).clamp(0.0, 1.0)
}

fn flatness(values: &[f64]) -> f64 {
    let target = mean(values);
    if target <= 0.0 {
        return 1.0;
    }
    let mae = mean(&values.iter().map(|v| (v - target).abs()).collect::<Vec<_>>());
    1.0 - (mae / target).clamp(0.0, 1.0)
}

/// One minus the mean absolute deviation from a flat profile at the
/// profile's own mean, relative to that mean.
pub fn score_accuracy(after: &CompensationStateSummary) -> f64 {
    flatness(&after.occupied_values())
}

/// Splits the window into `splits` equal time slices, compensates each and
/// scores the spread of their accuracies. Empty slices are skipped.
pub fn score_stability(
    window: &CloudWindow,
    strategy: Option<&CompensationStrategy>,
    setup: &SensorSetup,
    splits: usize,
) -> f64 {
    let splits = splits.max(1) as u64;
    let slice_ms = window.duration_ms as f64 / splits as f64;
    let compensated = apply_strategy(window, strategy);
    let scenario = ScenarioDescriptor::default();
    let mut accuracies = Vec::new();
    for k in 0..splits {
        let lo = window.start_ms as f64 + k as f64 * slice_ms;
        let hi = lo + slice_ms;
        let frames: Vec<_> = compensated
            .frames
            .iter()
            .filter(|f| {
                let t = f.timestamp_ms as f64;
                t >= lo && (t < hi || (k == splits - 1 && t < window.end_ms() as f64))
            })
            .cloned()
            .collect();
        if frames.iter().all(|f| f.points.is_empty()) {
            continue;
        }
        let slice = CloudWindow {
            start_ms: window.start_ms,
            duration_ms: window.duration_ms,
            frames,
        };
        let summary = CompensationStateSummary::from_window(&slice, setup, &scenario, strategy.copied());
        accuracies.push(score_accuracy(&summary));
    }
    stability_from_accuracies(&accuracies)
}

/// `1 - clamp(std(A) / 0.5, 0, 1)`, or one when fewer than two slices.
pub fn stability_from_accuracies(accuracies: &[f64]) -> f64 {
    if accuracies.len() < 2 {
        return 1.0;
    }
    1.0 - (population_std(accuracies) / 0.5).clamp(0.0, 1.0)
}

/// Weights `(mu1, mu2, mu3)` of effectiveness, accuracy and stability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub effectiveness: f64,
    pub accuracy: f64,
    pub stability: f64,
}

impl ScoreWeights {
    pub fn new(effectiveness: f64, accuracy: f64, stability: f64) -> Result<Self> {
        let w = Self {
            effectiveness,
            accuracy,
            stability,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.effectiveness, self.accuracy, self.stability];
        if parts.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "score weights must be non-negative and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            effectiveness: 1.0 / 3.0,
            accuracy: 1.0 / 3.0,
            stability: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub effectiveness: f64,
    pub accuracy: f64,
    pub stability: f64,
    pub weights: ScoreWeights,
    pub total: f64,
}

/// Combines the three components into the weighted total `W`.
pub fn compensation_score(
    effectiveness: f64,
    accuracy: f64,
    stability: f64,
    weights: ScoreWeights,
) -> Result<ScoreBreakdown> {
    weights.validate()?;
    for (name, v) in [("effectiveness", effectiveness), ("accuracy", accuracy), ("stability", stability)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} {v} outside [0, 1]")));
        }
    }
    let total = weights.effectiveness * effectiveness + weights.accuracy * accuracy + weights.stability * stability;
    Ok(ScoreBreakdown {
        effectiveness,
        accuracy,
        stability,
        weights,
        total,
    })
}
