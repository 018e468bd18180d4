//! Ground-truthed synthetic captures.
//!
//! Seated people emit small clusters of reflections every frame, with a tiny
//! doppler jitter for breathing and fidgeting. Their energies are attenuated
//! with the free-space model relative to 1 m, so the compensation exponent
//! that flattens the scene is known. Uniform low-energy clutter is sprinkled
//! over the room and labelled as noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compensation::{path_loss_db, REFERENCE_RANGE_M};
use crate::error::{Error, Result};
use crate::heatmap::Extent;
use crate::model::{Frame, RadarPoint, ScenarioDescriptor, SensorSetup};

/// Minimum spacing enforced between sampled seats, meters.
const MIN_SEAT_SPACING_M: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seat {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
}

impl Seat {
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Seat at `range` meters and `azimuth_deg` from the forward axis.
    pub fn polar(range: f64, azimuth_deg: f64) -> Self {
        let a = azimuth_deg.to_radians();
        Self {
            x: range * a.sin(),
            y: range * a.cos(),
            z: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub n_persons: usize,
    /// Explicit seats; sampled from `seat_range_m` when absent.
    pub seats: Option<Vec<Seat>>,
    pub seat_range_m: (f64, f64),
    pub duration_s: f64,
    pub frame_rate: f64,
    /// Mean clutter points per frame.
    pub noise_rate: f64,
    /// Inclusive range of reflections per person per frame.
    pub points_per_person: (u32, u32),
    pub cluster_sigma_m: f64,
    /// Bound on the breathing doppler, m/s.
    pub doppler_jitter: f64,
    /// Energy range at the 1 m reference before attenuation.
    pub base_energy: (f64, f64),
    pub noise_energy: (f64, f64),
    pub noise_region: Extent,
    /// 2 is free space.
    pub attenuation_exponent: f64,
    pub seed: u64,
    pub scenario: ScenarioDescriptor,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_persons: 3,
            seats: None,
            seat_range_m: (0.4, 2.0),
            duration_s: 60.0,
            frame_rate: 10.0,
            noise_rate: 10.0,
            points_per_person: (8, 15),
            cluster_sigma_m: 0.12,
            doppler_jitter: 0.05,
            base_energy: (30.0, 50.0),
            noise_energy: (0.5, 3.0),
            noise_region: Extent::room(),
            attenuation_exponent: 2.0,
            seed: 0,
            scenario: ScenarioDescriptor::default(),
        }
    }
}

impl SceneSpec {
    /// Three people at 0.6, 1.2 and 1.8 m, spread in azimuth.
    pub fn three_person() -> Self {
        Self {
            n_persons: 3,
            seats: Some(vec![Seat::polar(0.6, -45.0), Seat::polar(1.2, 20.0), Seat::polar(1.8, -15.0)]),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if let Some(seats) = &self.seats {
            if seats.len() != self.n_persons {
                return bad(format!("{} seats for {} persons", seats.len(), self.n_persons));
            }
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {}", self.duration_s));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate <= 1000.0) {
            return bad(format!("frame rate {}", self.frame_rate));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate.is_finite()) {
            return bad(format!("noise rate {}", self.noise_rate));
        }
        if self.points_per_person.0 > self.points_per_person.1 {
            return bad(format!("points per person {:?}", self.points_per_person));
        }
        let (lo, hi) = self.seat_range_m;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("seat range {:?}", self.seat_range_m));
        }
        for (name, (a, b)) in [("base energy", self.base_energy), ("noise energy", self.noise_energy)] {
            if !(a >= 0.0 && b >= a) {
                return bad(format!("{name} range ({a}, {b})"));
            }
        }
        if !(self.cluster_sigma_m >= 0.0 && self.doppler_jitter >= 0.0 && self.attenuation_exponent >= 0.0) {
            return bad("negative sigma, jitter or exponent".into());
        }
        self.noise_region.validate().map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.frame_rate).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub index: u64,
    pub timestamp_ms: u64,
    /// x-y position of every person in this frame.
    pub persons: Vec<(f64, f64)>,
    /// One flag per point of the frame, true for clutter.
    pub noise: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seats: Vec<Seat>,
    pub frames: Vec<FrameTruth>,
}

impl GroundTruth {
    /// People present at `t_ms` (the latest frame at or before it).
    pub fn persons_at(&self, t_ms: u64) -> Vec<(f64, f64)> {
        let i = self.frames.partition_point(|f| f.timestamp_ms <= t_ms);
        match i {
            0 => self.frames.first().map(|f| f.persons.clone()).unwrap_or_default(),
            i => self.frames[i - 1].persons.clone(),
        }
    }
}

/// Power attenuation factor at `range` relative to the 1 m reference.
pub fn attenuation_factor(range: f64, exponent: f64, wavelength: f64) -> Result<f64> {
    let excess_db = path_loss_db(range, wavelength)? - path_loss_db(REFERENCE_RANGE_M, wavelength)?;
    Ok(10f64.powf(-(exponent / 2.0) * excess_db / 10.0))
}

fn sample_seats(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Seat>> {
    let mut seats: Vec<Seat> = Vec::with_capacity(spec.n_persons);
    let mut attempts = 0;
    while seats.len() < spec.n_persons {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::InvalidSpec(format!(
                "cannot place {} seats {MIN_SEAT_SPACING_M} m apart in {:?}",
                spec.n_persons, spec.seat_range_m
            )));
        }
        let r = rng.gen_range(spec.seat_range_m.0..=spec.seat_range_m.1);
        let s = Seat::polar(r, rng.gen_range(-60.0..=60.0));
        if seats.iter().all(|o| (o.x - s.x).hypot(o.y - s.y) >= MIN_SEAT_SPACING_M) {
            seats.push(s);
        }
    }
    Ok(seats)
}

/// Generates a capture and its ground truth. Fully determined by `spec.seed`.
pub fn generate_scene(spec: &SceneSpec, setup: &SensorSetup) -> Result<(Vec<Frame>, GroundTruth)> {
    spec.validate()?;
    setup.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let seats = match &spec.seats {
        Some(s) => s.clone(),
        None => sample_seats(spec, &mut rng)?,
    };
    let lambda = setup.wavelength();
    let sigma = spec.cluster_sigma_m;
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let persons: Vec<(f64, f64)> = seats.iter().map(|s| (s.x, s.y)).collect();

    let mut frames = Vec::with_capacity(spec.frame_count());
    let mut truth = Vec::with_capacity(spec.frame_count());
    for i in 0..spec.frame_count() {
        let timestamp_ms = (i as f64 * 1000.0 / spec.frame_rate).round() as u64;
        let mut points = Vec::new();
        let mut noise = Vec::new();

        for seat in &seats {
            let n = rng.gen_range(spec.points_per_person.0..=spec.points_per_person.1);
            for _ in 0..n {
                // Clipped Gaussian: redraw offsets beyond three sigma.
                let offset = loop {
                    let o = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
                    if sigma == 0.0 || (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt() <= 3.0 * sigma {
                        break if sigma == 0.0 { [0.0; 3] } else { o };
                    }
                };
                let (x, y, z) = (seat.x + offset[0], seat.y + offset[1], seat.z + offset[2]);
                let range = (x * x + y * y + z * z).sqrt().max(1e-3);
                let base = uniform(&mut rng, spec.base_energy);
                let energy = base * attenuation_factor(range, spec.attenuation_exponent, lambda)?;
                let doppler = uniform(&mut rng, (-spec.doppler_jitter, spec.doppler_jitter));
                points.push(RadarPoint::new(x, y, z, doppler, energy));
                noise.push(false);
            }
        }

        let whole = spec.noise_rate.floor();
        let extra = rng.gen_bool((spec.noise_rate - whole).clamp(0.0, 1.0));
        let region = spec.noise_region;
        for _ in 0..(whole as usize + usize::from(extra)) {
            let x = rng.gen_range(region.x_min..region.x_max);
            let y = rng.gen_range(region.y_min..region.y_max);
            let z = rng.gen_range(-0.5..0.5);
            let doppler = rng.gen_range(-0.5..0.5);
            let energy = uniform(&mut rng, spec.noise_energy);
            let p = RadarPoint::new(x, y, z, doppler, energy);
            if p.range() <= setup.max_range {
                points.push(p);
                noise.push(true);
            }
        }

        frames.push(Frame::new(i as u64, timestamp_ms, points));
        truth.push(FrameTruth {
            index: i as u64,
            timestamp_ms,
            persons: persons.clone(),
            noise,
        });
    }
    Ok((frames, GroundTruth { seats, frames: truth }))
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Sampling schedule of an evaluation session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub sample_every_s: f64,
    pub session_s: f64,
    /// Stretch of capture examined at each tick, ms.
    pub sample_span_ms: u64,
}

impl ProtocolConfig {
    /// A full 15 minute session sampled every 10 s.
    pub fn full_session() -> Self {
        Self {
            session_s: 900.0,
            ..Self::default()
        }
    }

    pub fn tick_count(&self) -> usize {
        if !(self.sample_every_s > 0.0) || self.sample_every_s > self.session_s {
            return 0;
        }
        (self.session_s / self.sample_every_s + 1e-9).floor() as usize
    }
}

impl Default for ProtocolConfig {
    /// Desk-scale: one minute, sampled every 10 s.
    fn default() -> Self {
        Self {
            sample_every_s: 10.0,
            session_s: 60.0,
            sample_span_ms: 1000,
        }
    }
}

/// One evaluation tick: the capture stretch `[start_ms, end_ms)` and who is there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSample {
    pub tick: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub truth: Vec<(f64, f64)>,
}

impl EvaluationSample {
    pub fn frames<'a>(&self, frames: &'a [Frame]) -> &'a [Frame] {
        let lo = frames.partition_point(|f| f.timestamp_ms < self.start_ms);
        let hi = frames.partition_point(|f| f.timestamp_ms < self.end_ms);
        &frames[lo..hi]
    }
}

/// Evaluation ticks over an existing ground truth.
pub fn protocol_samples(truth: &GroundTruth, protocol: &ProtocolConfig) -> Vec<EvaluationSample> {
    let ticks = protocol.tick_count();
    if ticks == 0 {
        log::warn!(
            "sampling every {} s over a {} s session yields no samples",
            protocol.sample_every_s,
            protocol.session_s
        );
    }
    (0..ticks)
        .map(|k| {
            let start_ms = (k as f64 * protocol.sample_every_s * 1000.0).round() as u64;
            EvaluationSample {
                tick: k,
                start_ms,
                end_ms: start_ms + protocol.sample_span_ms,
                truth: truth.persons_at(start_ms),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub frames: Vec<Frame>,
    pub truth: GroundTruth,
    pub samples: Vec<EvaluationSample>,
}

/// Generates a session-long scene and the evaluation ticks over it.
pub fn protocol_run(spec: &SceneSpec, setup: &SensorSetup, protocol: &ProtocolConfig) -> Result<ProtocolRun> {
    let scene = SceneSpec {
        duration_s: protocol.session_s,
        ..spec.clone()
    };
    let (frames, truth) = generate_scene(&scene, setup)?;
    let samples = protocol_samples(&truth, protocol);
    Ok(ProtocolRun { frames, truth, samples })
}
