//! Polar free-space model around the sensor and the road direction it
//! implies.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LidarPoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamParams {
    pub bins: usize,
    pub max_range: f64,
    /// Half-angle of the front and rear regions, radians.
    pub region_half_angle: f64,
    /// Bins within this fraction of the regional maximum join the cluster.
    pub cluster_tolerance: f64,
}

impl Default for BeamParams {
    fn default() -> Self {
        Self {
            bins: 360,
            max_range: 50.0,
            region_half_angle: PI / 4.0,
            cluster_tolerance: 0.05,
        }
    }
}

impl BeamParams {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 8 || self.max_range <= 0.0 || !(0.0..PI / 2.0).contains(&self.region_half_angle) {
            return Err(Error::InvalidArgument(format!("invalid beam parameters {self:?}")));
        }
        Ok(())
    }
}

/// Free distance per azimuth bin; bin `k` spans
/// `[-pi + k*w, -pi + (k+1)*w)` with `w = 2*pi / bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamModel {
    pub lengths: Vec<f64>,
    pub max_range: f64,
}

impl BeamModel {
    pub fn bin_width(&self) -> f64 {
        2.0 * PI / self.lengths.len() as f64
    }

    pub fn bin_of(&self, azimuth: f64) -> usize {
        let n = self.lengths.len();
        let k = ((azimuth + PI) / self.bin_width()).floor() as isize;
        k.rem_euclid(n as isize) as usize
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        -PI + (k as f64 + 0.5) * self.bin_width()
    }
}

pub fn build_beam_model(non_ground: &[LidarPoint], params: &BeamParams) -> BeamModel {
    let mut model = BeamModel {
        lengths: vec![params.max_range; params.bins],
        max_range: params.max_range,
    };
    for p in non_ground.iter().filter(|p| p.is_finite()) {
        let r = p.horizontal_range();
        if r <= 0.0 {
            continue;
        }
        let k = model.bin_of(p.azimuth());
        model.lengths[k] = model.lengths[k].min(r);
    }
    model
}

/// Replaces bins that stick out past both neighbours by more than a
/// factor of two with the longer neighbour.
pub fn suppress_isolated_peaks(lengths: &[f64]) -> Vec<f64> {
    let n = lengths.len();
    (0..n)
        .map(|i| {
            let l = lengths[(i + n - 1) % n];
            let r = lengths[(i + 1) % n];
            let c = lengths[i];
            if l < 0.5 * c && r < 0.5 * c {
                l.max(r)
            } else {
                c
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadDirection {
    /// Heading of the road line through the sensor, radians in (-pi, pi].
    pub angle: f64,
    pub low_confidence: bool,
}

impl RoadDirection {
    pub fn unit(&self) -> Vector3<f64> {
        Vector3::new(self.angle.cos(), self.angle.sin(), 0.0)
    }
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Center direction of the longest run of near-maximal bins within
/// `half_angle` of `axis`; `None` when the region carries no contrast.
fn region_direction(model: &BeamModel, lengths: &[f64], axis: f64, params: &BeamParams) -> Option<f64> {
    let n = lengths.len();
    let mut bins: Vec<(f64, usize)> = (0..n)
        .filter_map(|k| {
            let off = wrap(model.bin_center(k) - axis);
            (off.abs() <= params.region_half_angle).then_some((off, k))
        })
        .collect();
    bins.sort_by(|a, b| a.0.total_cmp(&b.0));
    let vals: Vec<f64> = bins.iter().map(|&(_, k)| lengths[k]).collect();
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if vals.is_empty() || hi - lo <= 1e-9 * hi.max(1.0) {
        return None;
    }
    let cut = hi * (1.0 - params.cluster_tolerance);
    // (len, |center offset|, center offset)
    let mut best: Option<(usize, f64, f64)> = None;
    let mut i = 0;
    while i < vals.len() {
        if vals[i] < cut {
            i += 1;
            continue;
        }
        let start = i;
        while i < vals.len() && vals[i] >= cut {
            i += 1;
        }
        let center = 0.5 * (bins[start].0 + bins[i - 1].0);
        let len = i - start;
        let better = match best {
            None => true,
            Some((bl, bc, _)) => len > bl || (len == bl && center.abs() < bc),
        };
        if better {
            best = Some((len, center.abs(), center));
        }
    }
    best.map(|(_, _, c)| wrap(axis + c))
}

/// Bisects the longest free directions ahead of and behind the sensor.
pub fn estimate_road_direction(model: &BeamModel, params: &BeamParams) -> RoadDirection {
    let lengths = suppress_isolated_peaks(&model.lengths);
    let front = region_direction(model, &lengths, 0.0, params);
    let rear = region_direction(model, &lengths, PI, params).map(|a| wrap(a - PI));
    match (front, rear) {
        (Some(f), Some(r)) => {
            let (s, c) = (f.sin() + r.sin(), f.cos() + r.cos());
            RoadDirection {
                angle: s.atan2(c),
                low_confidence: false,
            }
        }
        (Some(a), None) | (None, Some(a)) => RoadDirection {
            angle: a,
            low_confidence: false,
        },
        (None, None) => RoadDirection {
            angle: 0.0,
            low_confidence: true,
        },
    }
}

/// True for points to the left of the road line (positive cross product).
pub fn is_left(p: &Vector3<f64>, direction: &RoadDirection) -> bool {
    let (s, c) = direction.angle.sin_cos();
    c * p.y - s * p.x > 0.0
}

/// Splits candidate positions into (left, right) index lists; points on
/// the line go right.
pub fn classify_left_right(points: &[Vector3<f64>], direction: &RoadDirection) -> (Vec<usize>, Vec<usize>) {
    (0..points.len()).partition(|&i| is_left(&points[i], direction))
}
