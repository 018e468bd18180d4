//! Domain types shared by every pipeline stage.
//!
//! Coordinates are radar-centric Cartesian: the antenna sits at the origin,
//! `y` points forward, `x` to the right and `z` up. Energies are the raw,
//! dimensionless intensity reported by the sensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default duration of a processing window in milliseconds.
pub const DEFAULT_WINDOW_MS: u64 = 200;

/// A single reflector reported by the radar in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Radial velocity relative to the antenna, m/s.
    pub doppler: f64,
    /// Reflected-signal intensity, dimensionless and non-negative.
    pub energy: f64,
}

impl RadarPoint {
    pub fn new(x: f64, y: f64, z: f64, doppler: f64, energy: f64) -> Self {
        Self {
            x,
            y,
            z,
            doppler,
            energy,
        }
    }

    /// Euclidean distance to the antenna.
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Azimuth in radians measured from the forward (`y`) axis, positive towards `+x`.
    pub fn azimuth(&self) -> f64 {
        self.x.atan2(self.y)
    }

    pub fn with_energy(self, energy: f64) -> Self {
        Self { energy, ..self }
    }
}

/// One radar measurement interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub index: u64,
    pub timestamp_ms: u64,
    pub points: Vec<RadarPoint>,
}

impl Frame {
    pub fn new(index: u64, timestamp_ms: u64, points: Vec<RadarPoint>) -> Self {
        Self {
            index,
            timestamp_ms,
            points,
        }
    }
}

/// A fixed-duration slice of a capture: every frame with a timestamp in
/// `[start_ms, start_ms + duration_ms)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudWindow {
    pub start_ms: u64,
    pub duration_ms: u64,
    pub frames: Vec<Frame>,
}

impl CloudWindow {
    /// Builds a window, checking that the duration is positive and that every
    /// frame falls inside the half-open interval.
    pub fn new(start_ms: u64, duration_ms: u64, frames: Vec<Frame>) -> Result<Self> {
        if duration_ms == 0 {
            return Err(Error::InvalidWindow("duration must be positive".into()));
        }
        let end = start_ms + duration_ms;
        if let Some(f) = frames
            .iter()
            .find(|f| f.timestamp_ms < start_ms || f.timestamp_ms >= end)
        {
            return Err(Error::InvalidWindow(format!(
                "frame {} at {} ms lies outside [{start_ms}, {end})",
                f.index, f.timestamp_ms
            )));
        }
        Ok(Self {
            start_ms,
            duration_ms,
            frames,
        })
    }

    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.duration_ms
    }

    pub fn point_count(&self) -> usize {
        self.frames.iter().map(|f| f.points.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.point_count() == 0
    }

    /// Points in frame-major, point-minor order.
    pub fn points(&self) -> impl Iterator<Item = &RadarPoint> + '_ {
        self.frames.iter().flat_map(|f| f.points.iter())
    }

    /// Returns a copy of this window with every point mapped through `f`.
    pub fn map_points(&self, mut f: impl FnMut(&RadarPoint) -> RadarPoint) -> Self {
        Self {
            start_ms: self.start_ms,
            duration_ms: self.duration_ms,
            frames: self
                .frames
                .iter()
                .map(|fr| Frame::new(fr.index, fr.timestamp_ms, fr.points.iter().map(&mut f).collect()))
                .collect(),
        }
    }
}

/// Radar configuration, used both for validation and as agent context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSetup {
    /// Carrier frequency in GHz.
    pub frequency_ghz: f64,
    /// Chirp slope in MHz/µs.
    pub chirp_slope_mhz_per_us: f64,
    pub chirps_per_frame: u32,
    /// Meters.
    pub range_resolution: f64,
    /// m/s.
    pub doppler_resolution: f64,
    /// Meters.
    pub max_range: f64,
}

impl SensorSetup {
    pub fn new(
        frequency_ghz: f64,
        chirp_slope_mhz_per_us: f64,
        chirps_per_frame: u32,
        range_resolution: f64,
        doppler_resolution: f64,
        max_range: f64,
    ) -> Result<Self> {
        let setup = Self {
            frequency_ghz,
            chirp_slope_mhz_per_us,
            chirps_per_frame,
            range_resolution,
            doppler_resolution,
            max_range,
        };
        setup.validate()?;
        Ok(setup)
    }

    /// A 77 GHz single-chip configuration with a 50 m working radius.
    pub fn iwr1443() -> Self {
        Self {
            frequency_ghz: 77.0,
            chirp_slope_mhz_per_us: 29.982,
            chirps_per_frame: 128,
            range_resolution: 0.044,
            doppler_resolution: 0.13,
            max_range: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("frequency_ghz", self.frequency_ghz),
            ("chirp_slope_mhz_per_us", self.chirp_slope_mhz_per_us),
            ("chirps_per_frame", f64::from(self.chirps_per_frame)),
            ("range_resolution", self.range_resolution),
            ("doppler_resolution", self.doppler_resolution),
            ("max_range", self.max_range),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSetup(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Carrier wavelength in meters.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.frequency_ghz * 1e9)
    }

    /// Short stable fingerprint of the configuration.
    pub fn digest(&self) -> String {
        format!(
            "f{}-s{}-c{}-rr{}-dr{}-mr{}",
            self.frequency_ghz,
            self.chirp_slope_mhz_per_us,
            self.chirps_per_frame,
            self.range_resolution,
            self.doppler_resolution,
            self.max_range
        )
    }
}

impl Default for SensorSetup {
    fn default() -> Self {
        Self::iwr1443()
    }
}

macro_rules! binary_attribute {
    ($(#[$meta:meta])* $name:ident { $a:ident => $a_str:literal, $b:ident => $b_str:literal }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            #[serde(rename = $a_str)]
            $a,
            #[serde(rename = $b_str)]
            $b,
        }

        impl $name {
            pub fn as_str(&self) -> &'static str {
                match self {
                    Self::$a => $a_str,
                    Self::$b => $b_str,
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $a_str => Some(Self::$a),
                    $b_str => Some(Self::$b),
                    _ => None,
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

binary_attribute!(Environment { Indoor => "Indoor", Outdoor => "Outdoor" });
binary_attribute!(Surface { Smooth => "Smooth", Rough => "Rough" });
binary_attribute!(Material { Metallic => "Metallic", NonMetallic => "Non-Metallic" });
binary_attribute!(CrowdDensity { Sparse => "Sparse", Dense => "Dense" });
binary_attribute!(Motion { Static => "Static", Dynamic => "Dynamic" });
binary_attribute!(Obstacles { Obstructed => "Obstructed", Unobstructed => "Unobstructed" });

/// The six-attribute description of the working scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioDescriptor {
    pub environment: Environment,
    pub surface: Surface,
    pub material: Material,
    pub crowd_density: CrowdDensity,
    pub motion: Motion,
    pub obstacles: Obstacles,
}

impl ScenarioDescriptor {
    /// Attribute name/value pairs in a fixed order.
    pub fn attributes(&self) -> [(&'static str, &'static str); 6] {
        [
            ("environment", self.environment.as_str()),
            ("surface", self.surface.as_str()),
            ("material", self.material.as_str()),
            ("crowd_density", self.crowd_density.as_str()),
            ("motion", self.motion.as_str()),
            ("obstacles", self.obstacles.as_str()),
        ]
    }
}

impl Default for ScenarioDescriptor {
    /// A seated audience in a furnished room.
    fn default() -> Self {
        Self {
            environment: Environment::Indoor,
            surface: Surface::Smooth,
            material: Material::NonMetallic,
            crowd_density: CrowdDensity::Sparse,
            motion: Motion::Static,
            obstacles: Obstacles::Unobstructed,
        }
    }
}

/// One annotated individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    pub label: String,
}

impl Detection {
    pub fn new(x: f64, y: f64, confidence: f64, label: impl Into<String>) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidDetection(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            x,
            y,
            confidence,
            label: label.into(),
        })
    }

    pub fn person(x: f64, y: f64, confidence: f64) -> Self {
        Self {
            x,
            y,
            confidence: confidence.clamp(0.0, 1.0),
            label: "person".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    NegativeEnergy,
    RangeExceeded,
    NonFinite,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NegativeEnergy => "negative-energy",
            Self::RangeExceeded => "range-exceeded",
            Self::NonFinite => "non-finite",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationVerdict {
    Accept,
    Reject(RejectReason),
}

impl ValidationVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Self::Accept)
    }
}

/// Checks a point against the sensor's physical limits. Never fails; NaN and
/// infinite inputs are rejected as values.
pub fn validate_point(p: &RadarPoint, setup: &SensorSetup) -> ValidationVerdict {
    if ![p.x, p.y, p.z, p.doppler, p.energy].iter().all(|v| v.is_finite()) {
        return ValidationVerdict::Reject(RejectReason::NonFinite);
    }
    if p.energy < 0.0 {
        return ValidationVerdict::Reject(RejectReason::NegativeEnergy);
    }
    if p.range() > setup.max_range {
        return ValidationVerdict::Reject(RejectReason::RangeExceeded);
    }
    ValidationVerdict::Accept
}
