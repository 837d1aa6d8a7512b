//! Top-down and camera-space renderings shown to the reviewer.

use image::{GrayAlphaImage, LumaA, Rgb, RgbImage};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LabeledCloud;
use crate::labels::PixelPoint;

/// Altitude difference mapped to 255 in the ADI, meters.
pub const ADI_FULL_SCALE: f64 = 0.5;

pub const CURB_MARKER: Rgb<u8> = Rgb([255, 0, 255]);
pub const BEV_CURB: Rgb<u8> = Rgb([255, 64, 32]);
pub const BEV_BACKGROUND: Rgb<u8> = Rgb([0, 0, 0]);

/// Heights shaded in the BEV, sensor frame, meters.
const BEV_Z_RANGE: (f64, f64) = (-2.5, 1.5);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewImageParams {
    pub adi_resolution: f64,
    pub bev_resolution: f64,
    /// Forward extent of the top-down images; the lateral extent is the
    /// same, centered on the sensor.
    pub extent: f64,
}

impl Default for ReviewImageParams {
    fn default() -> Self {
        Self {
            adi_resolution: 0.2,
            bev_resolution: 0.1,
            extent: 40.0,
        }
    }
}

impl ReviewImageParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("adi_resolution", self.adi_resolution), ("bev_resolution", self.bev_resolution)] {
            check_grid(v, self.extent).map_err(|e| Error::InvalidArgument(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

fn check_grid(resolution: f64, extent: f64) -> std::result::Result<u32, String> {
    if !(resolution > 0.0 && extent > 0.0 && resolution.is_finite() && extent.is_finite()) {
        return Err(format!("resolution {resolution} and extent {extent} must be positive"));
    }
    let n = (extent / resolution).ceil();
    if n > 16384.0 {
        return Err(format!("{n} cells per side is too many"));
    }
    Ok(n as u32)
}

/// Top-down grid over `[0, extent] x [-extent/2, extent/2]` in the sensor
/// frame. Row 0 is the far edge and column 0 the left edge, so forward is
/// up and left is left.
#[derive(Clone, Copy, Debug)]
struct TopDown {
    resolution: f64,
    extent: f64,
    n: u32,
}

impl TopDown {
    fn new(resolution: f64, extent: f64) -> Result<Self> {
        let n = check_grid(resolution, extent).map_err(Error::InvalidArgument)?;
        Ok(Self { resolution, extent, n })
    }

    /// `(column, row)` of a sensor-frame point, if inside the grid.
    fn cell(&self, p: &Vector3<f64>) -> Option<(u32, u32)> {
        let fx = (p.x / self.resolution).floor();
        let fy = ((p.y + 0.5 * self.extent) / self.resolution).floor();
        let n = self.n as f64;
        if !(fx >= 0.0 && fx < n && fy >= 0.0 && fy < n) {
            return None;
        }
        Some((self.n - 1 - fy as u32, self.n - 1 - fx as u32))
    }
}

/// Per-cell altitude difference image. Luma is `max z - min z` clipped to
/// [`ADI_FULL_SCALE`] and scaled to 8 bits; alpha is 255 for cells with
/// points and 0 for empty cells.
pub fn compute_adi(cloud: &LabeledCloud, resolution: f64, extent: f64) -> Result<GrayAlphaImage> {
    let grid = TopDown::new(resolution, extent)?;
    let n = grid.n as usize;
    let mut lo = vec![f64::INFINITY; n * n];
    let mut hi = vec![f64::NEG_INFINITY; n * n];
    for p in cloud.points().iter().filter(|p| p.is_finite()) {
        let q = p.position();
        if let Some((c, r)) = grid.cell(&q) {
            let i = r as usize * n + c as usize;
            lo[i] = lo[i].min(q.z);
            hi[i] = hi[i].max(q.z);
        }
    }
    Ok(GrayAlphaImage::from_fn(grid.n, grid.n, |c, r| {
        let i = r as usize * n + c as usize;
        if lo[i] > hi[i] {
            return LumaA([0, 0]);
        }
        let d = (hi[i] - lo[i]).clamp(0.0, ADI_FULL_SCALE);
        LumaA([(d / ADI_FULL_SCALE * 255.0).round() as u8, 255])
    }))
}

/// Altitude difference in meters encoded by an ADI luma value.
pub fn adi_meters(value: u8) -> f64 {
    value as f64 / 255.0 * ADI_FULL_SCALE
}

/// Orthographic top-down render: each occupied cell is shaded by the
/// highest point in it, and cells holding a curb point are drawn in
/// [`BEV_CURB`].
pub fn render_bev(cloud: &LabeledCloud, curbs: &[Vector3<f64>], resolution: f64, extent: f64) -> Result<RgbImage> {
    let grid = TopDown::new(resolution, extent)?;
    let n = grid.n as usize;
    let mut top = vec![f64::NEG_INFINITY; n * n];
    for p in cloud.points().iter().filter(|p| p.is_finite()) {
        let q = p.position();
        if let Some((c, r)) = grid.cell(&q) {
            let i = r as usize * n + c as usize;
            top[i] = top[i].max(q.z);
        }
    }
    let mut img = RgbImage::from_fn(grid.n, grid.n, |c, r| {
        let z = top[r as usize * n + c as usize];
        if z == f64::NEG_INFINITY {
            return BEV_BACKGROUND;
        }
        let t = ((z - BEV_Z_RANGE.0) / (BEV_Z_RANGE.1 - BEV_Z_RANGE.0)).clamp(0.0, 1.0);
        let v = (60.0 + 195.0 * t).round() as u8;
        Rgb([v, v, v])
    });
    for q in curbs.iter().filter(|q| q.iter().all(|v| v.is_finite())) {
        if let Some((c, r)) = grid.cell(q) {
            img.put_pixel(c, r, BEV_CURB);
        }
    }
    Ok(img)
}

/// Draws a 3x3 [`CURB_MARKER`] block centered on each curb pixel. Blocks
/// are clipped at the image border.
pub fn overlay_curbs(rgb: &RgbImage, pixels: &[PixelPoint]) -> RgbImage {
    let mut out = rgb.clone();
    let (w, h) = (rgb.width() as i64, rgb.height() as i64);
    for px in pixels {
        if !(px.u.is_finite() && px.v.is_finite()) {
            continue;
        }
        let (u, v) = (px.u.floor() as i64, px.v.floor() as i64);
        for y in v - 1..=v + 1 {
            for x in u - 1..=u + 1 {
                if (0..w).contains(&x) && (0..h).contains(&y) {
                    out.put_pixel(x as u32, y as u32, CURB_MARKER);
                }
            }
        }
    }
    out
}
