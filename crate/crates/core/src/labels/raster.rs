use std::path::Path;

use image::GrayImage;

use crate::error::{Error, Result};

pub const MASK_ON: u8 = 255;

/// Binary single-channel mask, row-major, 0 or 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    width: u32,
    height: u32,
    values: Vec<u8>,
}

impl LabelMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<u8>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} mask",
                values.len()
            )));
        }
        if values.iter().any(|&v| v != 0 && v != MASK_ON) {
            return Err(Error::InvalidArgument("mask values must be 0 or 255".into()));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.values[(y * self.width + x) as usize] == MASK_ON
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.values[(y * self.width + x) as usize] = if on { MASK_ON } else { 0 };
    }

    pub fn count_on(&self) -> usize {
        self.values.iter().filter(|&&v| v == MASK_ON).count()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width, self.height, self.values.clone()).expect("buffer sized to dimensions")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.to_image()
            .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
        crate::io::write_atomic(path, &bytes)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        let values: Vec<u8> = img.into_raw().into_iter().map(|v| if v >= 128 { MASK_ON } else { 0 }).collect();
        Ok(Self {
            width: w,
            height: h,
            values,
        })
    }
}

/// Abscissa where edge `a -> b` meets the horizontal line `y`.
fn crossing_x(a: [f64; 2], b: [f64; 2], y: f64) -> f64 {
    a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
}

fn crosses(a: [f64; 2], b: [f64; 2], y: f64) -> bool {
    (a[1] > y) != (b[1] > y)
}

/// Even-odd containment with points on the boundary counted inside.
pub fn point_in_polygon(polygon: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = polygon.len();
    let mut inside = false;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        if a == p {
            return true;
        }
        if a[1] == p[1] && b[1] == p[1] && (a[0].min(b[0])..=a[0].max(b[0])).contains(&p[0]) {
            return true;
        }
        if crosses(a, b, p[1]) {
            let x = crossing_x(a, b, p[1]);
            if x == p[0] {
                return true;
            }
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Fills every pixel whose center `(x + 0.5, y + 0.5)` is inside the
/// polygon under the even-odd rule, boundary included.
pub fn rasterize_mask(polygon: &[[f64; 2]], width: u32, height: u32) -> LabelMask {
    let mut mask = LabelMask::empty(width, height);
    let n = polygon.len();
    if n < 3 {
        return mask;
    }
    let mut xs = Vec::new();
    for row in 0..height {
        let yc = row as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            if crosses(a, b, yc) {
                xs.push(crossing_x(a, b, yc));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            fill_span(&mut mask, row, pair[0], pair[1]);
        }
        for i in 0..n {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            if a[1] == yc {
                if b[1] == yc {
                    fill_span(&mut mask, row, a[0].min(b[0]), a[0].max(b[0]));
                } else {
                    fill_span(&mut mask, row, a[0], a[0]);
                }
            }
        }
    }
    mask
}

/// Sets pixels of `row` whose centers lie in `[x0, x1]`.
fn fill_span(mask: &mut LabelMask, row: u32, x0: f64, x1: f64) {
    let first = (x0 - 0.5).ceil().max(0.0);
    let last = (x1 - 0.5).floor().min(mask.width as f64 - 1.0);
    if first > last {
        return;
    }
    for col in first as u32..=last as u32 {
        mask.set(col, row, true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Per-pixel even-odd oracle, written independently of the scanline fill.
    fn brute(polygon: &[[f64; 2]], w: u32, h: u32) -> Vec<u8> {
        let n = polygon.len();
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut parity = false;
                let mut on_edge = false;
                for i in 0..n {
                    let (x1, y1) = (polygon[i][0], polygon[i][1]);
                    let (x2, y2) = (polygon[(i + 1) % n][0], polygon[(i + 1) % n][1]);
                    if (x1, y1) == (px, py) || (y1 == py && y2 == py && x1.min(x2) <= px && px <= x1.max(x2)) {
                        on_edge = true;
                    } else if (y1 > py) != (y2 > py) {
                        let xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
                        if xc == px {
                            on_edge = true;
                        } else if px < xc {
                            parity = !parity;
                        }
                    }
                }
                out.push(if parity || on_edge { 255 } else { 0 });
            }
        }
        out
    }

    #[test]
    fn full_frame_and_empty() {
        let full = [[-1.0, -1.0], [11.0, -1.0], [11.0, 6.0], [-1.0, 6.0]];
        assert_eq!(rasterize_mask(&full, 10, 5).count_on(), 50);
        let flat = [[1.0, 1.0], [5.0, 1.2], [9.0, 1.4]];
        assert_eq!(rasterize_mask(&flat, 10, 5).count_on(), 0);
    }

    #[test]
    fn triangle_matches_oracle() {
        let tri = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let m = rasterize_mask(&tri, 12, 12);
        assert_eq!(m.values(), brute(&tri, 12, 12).as_slice());
        // Centers with x + y <= 10: 55 of them, boundary included.
        assert_eq!(m.count_on(), 55);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = rasterize_mask(&[[0.0, 0.0], [7.0, 1.0], [3.0, 6.0]], 9, 7);
        let p = dir.path().join("m.png");
        m.save_png(&p).unwrap();
        assert_eq!(LabelMask::load_png(&p).unwrap(), m);
    }

    fn star(center: [f64; 2], radii: &[f64], phase: f64) -> Vec<[f64; 2]> {
        let n = radii.len();
        (0..n)
            .map(|i| {
                let a = phase + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [center[0] + radii[i] * a.cos(), center[1] + radii[i] * a.sin()]
            })
            .collect()
    }

    proptest! {
        #[test]
        fn scanline_matches_brute_force(
            radii in prop::collection::vec(1.0..30.0f64, 3..12),
            cx in 0.0..64.0f64,
            cy in 0.0..64.0f64,
            phase in 0.0..6.3f64,
            w in 1u32..64,
            h in 1u32..64,
        ) {
            let poly = star([cx, cy], &radii, phase);
            let (m, b) = (rasterize_mask(&poly, w, h), brute(&poly, w, h));
            prop_assert_eq!(m.values(), b.as_slice());
        }

        #[test]
        fn integer_polygons_match_brute_force(
            radii in prop::collection::vec(1.0..20.0f64, 3..9),
            phase in 0.0..6.3f64,
        ) {
            // Half-integer vertices land exactly on pixel centers.
            let poly: Vec<[f64; 2]> = star([20.0, 20.0], &radii, phase)
                .into_iter()
                .map(|p| [p[0].round() + 0.5, p[1].round() + 0.5])
                .collect();
            let (m, b) = (rasterize_mask(&poly, 40, 40), brute(&poly, 40, 40));
            prop_assert_eq!(m.values(), b.as_slice());
        }
    }
}
