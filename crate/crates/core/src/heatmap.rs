//! Intensity-weighted density grids on the x-y plane.

use std::io::Cursor;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CloudWindow, RadarPoint};

/// Default grid resolution.
pub const DEFAULT_GRID: (usize, usize) = (64, 64);
/// Rendered pixels per grid cell along each axis.
const PIXELS_PER_CELL: u32 = 4;

/// Axis-aligned region of interest in meters. Cells and membership are
/// half-open: `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let e = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        e.validate()?;
        Ok(e)
    }

    /// Room-scale region in front of the sensor.
    pub fn room() -> Self {
        Self {
            x_min: -3.0,
            x_max: 3.0,
            y_min: 0.0,
            y_max: 6.0,
        }
    }

    /// The sensor's full 50 m half-disc.
    pub fn hall() -> Self {
        Self {
            x_min: -50.0,
            x_max: 50.0,
            y_min: 0.0,
            y_max: 50.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate extent {self:?}")))
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// Closest point of the closed extent.
    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x_min, self.x_max), y.clamp(self.y_min, self.y_max))
    }

    /// `(row, col)` of the half-open cell holding `(x, y)` on a `rows x cols`
    /// grid, or `None` outside the extent. A point on an interior edge belongs
    /// to the higher-index cell.
    pub fn cell_of(&self, x: f64, y: f64, rows: usize, cols: usize) -> Option<(usize, usize)> {
        if !self.contains(x, y) {
            return None;
        }
        let col = axis_index(x, self.x_min, self.x_max, cols);
        let row = axis_index(y, self.y_min, self.y_max, rows);
        Some((row, col))
    }
}

fn axis_index(v: f64, lo: f64, hi: f64, n: usize) -> usize {
    let edge = |i: usize| lo + (hi - lo) * i as f64 / n as f64;
    let mut i = (((v - lo) / (hi - lo)) * n as f64).floor().max(0.0) as usize;
    i = i.min(n - 1);
    if v < edge(i) && i > 0 {
        i -= 1;
    } else if i + 1 < n && v >= edge(i + 1) {
        i += 1;
    }
    i
}

/// A point on the x-y plane carrying its replication count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub x: f64,
    pub y: f64,
    pub weight: u64,
}

/// Integer replication weight for a point: energy rounded half-up, at least
/// one for any positive energy, zero for zero energy.
pub fn replication_weight(energy: f64) -> u64 {
    if !(energy > 0.0) {
        0
    } else {
        ((energy + 0.5).floor() as u64).max(1)
    }
}

/// Projects points onto the x-y plane, replicating each by its intensity.
pub fn replicate_by_intensity<'a>(points: impl IntoIterator<Item = &'a RadarPoint>) -> Vec<WeightedPoint> {
    points
        .into_iter()
        .map(|p| WeightedPoint {
            x: p.x,
            y: p.y,
            weight: replication_weight(p.energy),
        })
        .collect()
}

/// Per-cell weighted counts, row-major with row 0 at `y_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCounts {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<u64>,
    /// Total weight of points that fell outside the extent.
    pub dropped: u64,
}

impl BinnedCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn bin_points(points: &[WeightedPoint], extent: &Extent, grid: (usize, usize)) -> Result<BinnedCounts> {
    extent.validate()?;
    let (rows, cols) = grid;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!("grid shape {rows}x{cols}")));
    }
    let mut counts = vec![0u64; rows * cols];
    let mut dropped = 0;
    for p in points {
        match extent.cell_of(p.x, p.y, rows, cols) {
            Some((r, c)) => counts[r * cols + c] += p.weight,
            None => dropped += p.weight,
        }
    }
    Ok(BinnedCounts {
        rows,
        cols,
        counts,
        dropped,
    })
}

/// Gridded density field: `density[j] = counts[j] / cell_area`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub extent: Extent,
    pub rows: usize,
    pub cols: usize,
    /// Area of every cell, m^2.
    pub cell_area: f64,
    pub counts: Vec<u64>,
    /// Points per m^2.
    pub density: Vec<f64>,
}

impl Heatmap {
    pub fn cell_width(&self) -> f64 {
        self.extent.width() / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.extent.height() / self.rows as f64
    }

    /// Centre of cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.extent.x_min + (col as f64 + 0.5) * self.cell_width(),
            self.extent.y_min + (row as f64 + 0.5) * self.cell_height(),
        )
    }

    pub fn density_at(&self, row: usize, col: usize) -> f64 {
        self.density[row * self.cols + col]
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// An empty map over `extent`.
    pub fn empty(extent: Extent, grid: (usize, usize)) -> Result<Self> {
        let counts = BinnedCounts {
            rows: grid.0,
            cols: grid.1,
            counts: vec![0; grid.0 * grid.1],
            dropped: 0,
        };
        to_density(&counts, extent)
    }

    /// Full replicate, bin and normalise chain for one window. Also returns
    /// the weight that fell outside the extent.
    pub fn from_window(window: &CloudWindow, extent: Extent, grid: (usize, usize)) -> Result<(Self, u64)> {
        let weighted = replicate_by_intensity(window.points());
        let binned = bin_points(&weighted, &extent, grid)?;
        let dropped = binned.dropped;
        Ok((to_density(&binned, extent)?, dropped))
    }
}

/// Divides each cell count by the uniform cell area of `extent`.
pub fn to_density(binned: &BinnedCounts, extent: Extent) -> Result<Heatmap> {
    extent.validate()?;
    let cell_area = extent.width() * extent.height() / (binned.rows * binned.cols) as f64;
    Ok(Heatmap {
        extent,
        rows: binned.rows,
        cols: binned.cols,
        cell_area,
        counts: binned.counts.clone(),
        density: binned.counts.iter().map(|&c| c as f64 / cell_area).collect(),
    })
}

/// Colour range used when rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorScale {
    /// Densities at or above this value map to the brightest colour.
    Fixed(f64),
    /// `[0, max density]` spans the full ramp.
    Auto,
}

// Perceptually ordered dark-to-bright anchors.
const RAMP: [[u8; 3]; 5] = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
];

/// Ramp colour at `t` in `[0, 1]`.
pub fn ramp_color(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let pos = t * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let a = f64::from(RAMP[i][k]);
        let b = f64::from(RAMP[i + 1][k]);
        *o = (a + (b - a) * f).round() as u8;
    }
    out
}

/// Renders the map as an RGB PNG, `y` increasing upwards.
pub fn render(hm: &Heatmap, scale: ColorScale) -> Result<Vec<u8>> {
    let max = match scale {
        ColorScale::Fixed(m) => m,
        ColorScale::Auto => hm.max_density(),
    };
    let (w, h) = (hm.cols as u32 * PIXELS_PER_CELL, hm.rows as u32 * PIXELS_PER_CELL);
    let img = RgbImage::from_fn(w, h, |px, py| {
        let col = (px / PIXELS_PER_CELL) as usize;
        let row = hm.rows - 1 - (py / PIXELS_PER_CELL) as usize;
        let t = if max > 0.0 { hm.density_at(row, col) / max } else { 0.0 };
        image::Rgb(ramp_color(t))
    });
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(x: f64, y: f64) -> WeightedPoint {
        WeightedPoint { x, y, weight: 1 }
    }

    #[test]
    fn intensity_six_replicates_six_times() {
        let w = replicate_by_intensity(&[RadarPoint::new(1.0, 0.0, 0.0, 0.0, 6.0)]);
        assert_eq!(w, vec![WeightedPoint { x: 1.0, y: 0.0, weight: 6 }]);
    }

    #[test]
    fn replication_rounding() {
        assert_eq!(replication_weight(0.0), 0);
        assert_eq!(replication_weight(2.4), 2);
        assert_eq!(replication_weight(2.6), 3);
        assert_eq!(replication_weight(2.5), 3);
        assert_eq!(replication_weight(0.2), 1);
    }

    #[test]
    fn single_cell_grid_holds_all_weight() {
        let p = WeightedPoint { x: 0.1, y: 0.1, weight: 6 };
        let b = bin_points(&[p], &Extent::new(0.0, 1.0, 0.0, 1.0).unwrap(), (1, 1)).unwrap();
        assert_eq!(b.counts, vec![6]);
    }

    #[test]
    fn interior_edge_goes_to_higher_cell() {
        let ext = Extent::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let b = bin_points(&[unit(0.5, 0.25)], &ext, (2, 2)).unwrap();
        assert_eq!(b.counts, vec![0, 1, 0, 0]);
        let ext = Extent::room();
        for k in 1..64 {
            let x = ext.x_min + ext.width() * k as f64 / 64.0;
            assert_eq!(ext.cell_of(x, 1.0, 64, 64).unwrap().1, k);
        }
    }

    #[test]
    fn outside_points_are_reported() {
        let ext = Extent::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let b = bin_points(&[unit(1.0, 0.5), unit(-0.1, 0.5), unit(0.5, 0.5)], &ext, (2, 2)).unwrap();
        assert_eq!(b.total(), 1);
        assert_eq!(b.dropped, 2);
    }

    #[test]
    fn density_divides_by_cell_area() {
        let ext = Extent::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let b = BinnedCounts { rows: 2, cols: 2, counts: vec![8, 0, 0, 0], dropped: 0 };
        let hm = to_density(&b, ext).unwrap();
        assert!((hm.cell_area - 0.25).abs() < 1e-12);
        assert!((hm.density[0] - 32.0).abs() < 1e-9);
        assert_eq!(hm.density[1], 0.0);
        let hm2 = to_density(&b, Extent::new(0.0, 2.0, 0.0, 1.0).unwrap()).unwrap();
        assert!((hm2.density[0] - 16.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(Extent::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(bin_points(&[], &Extent::room(), (0, 4)).is_err());
    }

    #[test]
    fn zero_map_renders_uniform_background() {
        let hm = Heatmap::empty(Extent::room(), (8, 8)).unwrap();
        let png = render(&hm, ColorScale::Auto).unwrap();
        let img = image::load_from_memory(&png).unwrap().to_rgb8();
        assert!(img.pixels().all(|p| p.0 == RAMP[0]));
    }

    #[test]
    fn scale_max_is_brightest() {
        let ext = Extent::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let b = BinnedCounts { rows: 1, cols: 2, counts: vec![5, 0], dropped: 0 };
        let hm = to_density(&b, ext).unwrap();
        let img = image::load_from_memory(&render(&hm, ColorScale::Fixed(10.0)).unwrap()).unwrap().to_rgb8();
        assert_eq!(img.get_pixel(0, 0).0, RAMP[4]);
        assert_eq!(img.get_pixel(PIXELS_PER_CELL, 0).0, RAMP[0]);
    }

    #[test]
    fn rendering_is_deterministic() {
        let ext = Extent::room();
        let pts: Vec<_> = (0..50).map(|i| WeightedPoint { x: -2.0 + 0.08 * i as f64, y: 0.1 * i as f64, weight: i }).collect();
        let hm = to_density(&bin_points(&pts, &ext, (16, 16)).unwrap(), ext).unwrap();
        assert_eq!(render(&hm, ColorScale::Auto).unwrap(), render(&hm, ColorScale::Auto).unwrap());
    }

    proptest! {
        #[test]
        fn binning_conserves_mass(
            pts in proptest::collection::vec((-4.0f64..4.0, -1.0f64..7.0, 0u64..50), 0..40),
            rows in 1usize..20, cols in 1usize..20,
        ) {
            let w: Vec<_> = pts.iter().map(|&(x, y, weight)| WeightedPoint { x, y, weight }).collect();
            let b = bin_points(&w, &Extent::room(), (rows, cols)).unwrap();
            prop_assert_eq!(b.total() + b.dropped, w.iter().map(|p| p.weight).sum::<u64>());
        }

        #[test]
        fn binning_is_translation_equivariant(
            pts in proptest::collection::vec((-3.0f64..3.0, 0.0f64..6.0), 0..30),
            dx in -8i32..8, dy in -8i32..8,
        ) {
            // Shift by whole cells of a 12x12 grid over a 6x6 m extent.
            let (sx, sy) = (f64::from(dx) * 0.5, f64::from(dy) * 0.5);
            let ext = Extent::room();
            let shifted = Extent::new(ext.x_min + sx, ext.x_max + sx, ext.y_min + sy, ext.y_max + sy).unwrap();
            let a: Vec<_> = pts.iter().map(|&(x, y)| unit(x, y)).collect();
            let b: Vec<_> = pts.iter().map(|&(x, y)| unit(x + sx, y + sy)).collect();
            let ba = bin_points(&a, &ext, (12, 12)).unwrap();
            let bb = bin_points(&b, &shifted, (12, 12)).unwrap();
            prop_assert_eq!(ba.counts, bb.counts);
        }

        #[test]
        fn density_matches_counts(counts in proptest::collection::vec(0u64..1000, 16)) {
            let b = BinnedCounts { rows: 4, cols: 4, counts, dropped: 0 };
            let hm = to_density(&b, Extent::room()).unwrap();
            for (c, d) in hm.counts.iter().zip(&hm.density) {
                prop_assert!((*c as f64 / hm.cell_area - d).abs() <= 1e-9 * d.abs().max(1.0));
            }
        }
    }
}
