//! Flattening of the four input modalities into one token sequence.
//!
//! Layout: `[raw data | setup | scenario | prompt]`. The raw-data span has a
//! fixed length of `TOKENS_PER_POINT * point_cap + 1`: one five-token group per
//! retained point, `<pad>` groups for unused slots and a final truncation flag.

use serde::{Deserialize, Serialize};

use crate::model::{CloudWindow, ScenarioDescriptor, SensorSetup};

pub const POINT_CAP: usize = 2048;
pub const TOKENS_PER_POINT: usize = 5;
pub const ENERGY_BINS: u32 = 64;
pub const PAD_TOKEN: &str = "<pad>";
pub const TRUNCATED_TOKEN: &str = "<truncated>";
pub const UNTRUNCATED_TOKEN: &str = "<complete>";

// Log-spaced energy bins cover [1e-2, 1e5].
const ENERGY_LOG_LO: f64 = -2.0;
const ENERGY_LOG_HI: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub point_cap: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { point_cap: POINT_CAP }
    }
}

/// Half-open token ranges of the four modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpans {
    pub raw_data: (usize, usize),
    pub setup: (usize, usize),
    pub scenario: (usize, usize),
    pub prompt: (usize, usize),
}

impl ModalitySpans {
    pub fn as_array(&self) -> [(usize, usize); 4] {
        [self.raw_data, self.setup, self.scenario, self.prompt]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub spans: ModalitySpans,
    /// Points in the source window, retained or not.
    pub total_points: usize,
    /// Flat window index of the point in each occupied raw-data slot.
    pub retained: Vec<usize>,
}

impl TokenSequence {
    pub fn raw_tokens(&self) -> &[String] {
        &self.tokens[self.spans.raw_data.0..self.spans.raw_data.1]
    }

    pub fn is_truncated(&self) -> bool {
        self.raw_tokens().last().map(String::as_str) == Some(TRUNCATED_TOKEN)
    }

    /// `key=value` pairs of the setup span.
    pub fn setup_value(&self, key: &str) -> Option<&str> {
        lookup(&self.tokens[self.spans.setup.0..self.spans.setup.1], key)
    }

    pub fn scenario_value(&self, key: &str) -> Option<&str> {
        lookup(&self.tokens[self.spans.scenario.0..self.spans.scenario.1], key)
    }
}

fn lookup<'a>(tokens: &'a [String], key: &str) -> Option<&'a str> {
    tokens.iter().find_map(|t| t.strip_prefix(key)?.strip_prefix('='))
}

/// Log-spaced energy bin in `0..ENERGY_BINS`.
pub fn energy_bin(energy: f64) -> u32 {
    if !(energy > 0.0) {
        return 0;
    }
    let t = (energy.log10() - ENERGY_LOG_LO) / (ENERGY_LOG_HI - ENERGY_LOG_LO);
    ((t * f64::from(ENERGY_BINS)).floor().max(0.0) as u32).min(ENERGY_BINS - 1)
}

/// Geometric centre of an energy bin.
pub fn energy_bin_value(bin: u32) -> f64 {
    let width = (ENERGY_LOG_HI - ENERGY_LOG_LO) / f64::from(ENERGY_BINS);
    10f64.powf(ENERGY_LOG_LO + (f64::from(bin) + 0.5) * width)
}

fn quantize(v: f64, step: f64) -> i64 {
    (v / step).round() as i64
}

/// Builds the token sequence for one window. Identical inputs always give
/// identical output. When the window holds more than `point_cap` points the
/// highest-energy ones are retained, in their original order.
pub fn serialize_context(
    window: &CloudWindow,
    setup: &SensorSetup,
    scenario: &ScenarioDescriptor,
    prompt: &str,
    config: &TokenizerConfig,
) -> TokenSequence {
    let points: Vec<_> = window.points().collect();
    let total_points = points.len();

    let mut retained: Vec<usize> = (0..total_points).collect();
    let truncated = total_points > config.point_cap;
    if truncated {
        retained.sort_by(|&a, &b| points[b].energy.total_cmp(&points[a].energy).then(a.cmp(&b)));
        retained.truncate(config.point_cap);
        retained.sort_unstable();
    }

    let mut tokens = Vec::with_capacity(TOKENS_PER_POINT * config.point_cap + 64);
    for &i in &retained {
        let p = points[i];
        tokens.push(format!("x{}", quantize(p.x, setup.range_resolution)));
        tokens.push(format!("y{}", quantize(p.y, setup.range_resolution)));
        tokens.push(format!("z{}", quantize(p.z, setup.range_resolution)));
        tokens.push(format!("d{}", quantize(p.doppler, setup.doppler_resolution)));
        tokens.push(format!("e{}", energy_bin(p.energy)));
    }
    tokens.resize(TOKENS_PER_POINT * config.point_cap, PAD_TOKEN.to_string());
    tokens.push(if truncated { TRUNCATED_TOKEN } else { UNTRUNCATED_TOKEN }.to_string());
    let raw_end = tokens.len();

    tokens.extend([
        format!("frequency_ghz={}", setup.frequency_ghz),
        format!("chirp_slope_mhz_per_us={}", setup.chirp_slope_mhz_per_us),
        format!("chirps_per_frame={}", setup.chirps_per_frame),
        format!("range_resolution={}", setup.range_resolution),
        format!("doppler_resolution={}", setup.doppler_resolution),
        format!("max_range={}", setup.max_range),
    ]);
    let setup_end = tokens.len();

    tokens.extend(scenario.attributes().iter().map(|(k, v)| format!("{k}={v}")));
    let scenario_end = tokens.len();

    tokens.extend(prompt.split_whitespace().map(str::to_string));
    let prompt_end = tokens.len();

    TokenSequence {
        tokens,
        spans: ModalitySpans {
            raw_data: (0, raw_end),
            setup: (raw_end, setup_end),
            scenario: (setup_end, scenario_end),
            prompt: (scenario_end, prompt_end),
        },
        total_points,
        retained,
    }
}

/// A point recovered from its token group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizedPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub doppler: f64,
    pub energy_bin: u32,
}

/// Decodes the occupied raw-data slots. `None` if a group is malformed or
/// the setup span lacks the resolutions needed to dequantize.
pub fn decode_raw_points(seq: &TokenSequence) -> Option<Vec<QuantizedPoint>> {
    let rr: f64 = seq.setup_value("range_resolution")?.parse().ok()?;
    let dr: f64 = seq.setup_value("doppler_resolution")?.parse().ok()?;
    let raw = seq.raw_tokens();
    let body = &raw[..raw.len().saturating_sub(1)];
    let mut out = Vec::new();
    for group in body.chunks(TOKENS_PER_POINT) {
        if group.iter().all(|t| t == PAD_TOKEN) {
            break;
        }
        let field = |tok: &String, prefix: char| -> Option<i64> { tok.strip_prefix(prefix)?.parse().ok() };
        if group.len() != TOKENS_PER_POINT {
            return None;
        }
        out.push(QuantizedPoint {
            x: field(&group[0], 'x')? as f64 * rr,
            y: field(&group[1], 'y')? as f64 * rr,
            z: field(&group[2], 'z')? as f64 * rr,
            doppler: field(&group[3], 'd')? as f64 * dr,
            energy_bin: u32::try_from(field(&group[4], 'e')?).ok()?,
        });
    }
    Some(out)
}
