//! Ring-wise spatial features: height difference, smoothness and the
//! expected along-ring point spacing that sizes the neighbourhood window.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Label, LabeledCloud, LidarGeometry, LidarPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurbThresholds {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub ts: f64,
}

impl Default for CurbThresholds {
    fn default() -> Self {
        Self {
            h1: 0.05,
            h2: 0.30,
            h3: 0.04,
            ts: 0.002,
        }
    }
}

impl CurbThresholds {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.h1 && self.h1 < self.h2 && self.h3 > 0.0 && self.ts > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid curb thresholds {self:?}")))
        }
    }
}

/// Indices of one ring's points in a cloud, sorted by azimuth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingList {
    pub ring: u16,
    pub indices: Vec<usize>,
}

/// Groups points by ring id; rings come out in ascending id order and the
/// points of each ring in ascending azimuth (ties by index).
pub fn split_into_rings(cloud: &LabeledCloud) -> Vec<RingList> {
    split_into_rings_where(cloud, |_| true)
}

pub(crate) fn split_into_rings_where(cloud: &LabeledCloud, keep: impl Fn(Label) -> bool) -> Vec<RingList> {
    let mut by_ring: std::collections::BTreeMap<u16, Vec<usize>> = Default::default();
    for (i, (p, l)) in cloud.iter().enumerate() {
        if keep(l) {
            by_ring.entry(p.ring).or_default().push(i);
        }
    }
    let pts = cloud.points();
    by_ring
        .into_iter()
        .map(|(ring, mut indices)| {
            indices.sort_by(|&a, &b| pts[a].azimuth().total_cmp(&pts[b].azimuth()).then(a.cmp(&b)));
            RingList { ring, indices }
        })
        .collect()
}

/// Contiguous window `[start, end)` of positions within one ring list,
/// centered on `center` and clipped at the list ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RingNeighborhood {
    pub center: usize,
    pub start: usize,
    pub end: usize,
    pub window_halfwidth: usize,
}

impl RingNeighborhood {
    /// `None` when the clipped window would hold fewer than two points.
    pub fn around(center: usize, window_halfwidth: usize, ring_len: usize) -> Option<Self> {
        if center >= ring_len {
            return None;
        }
        let start = center.saturating_sub(window_halfwidth);
        let end = (center + window_halfwidth + 1).min(ring_len);
        (end - start >= 2).then_some(Self {
            center,
            start,
            end,
            window_halfwidth,
        })
    }

    pub fn n_neighbor(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeightStats {
    pub range: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
}

pub fn height_stats(zs: &[f64]) -> HeightStats {
    let n = zs.len() as f64;
    let (lo, hi) = zs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| (lo.min(z), hi.max(z)));
    let mean = zs.iter().sum::<f64>() / n;
    let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n;
    HeightStats {
        range: hi - lo,
        mean,
        std_dev: var.sqrt(),
    }
}

/// Height band on the range plus a floor on the spread.
pub fn height_values_pass(zs: &[f64], th: &CurbThresholds) -> bool {
    let s = height_stats(zs);
    th.h1 <= s.range && s.range <= th.h2 && s.std_dev >= th.h3
}

pub fn height_difference_pass(nb: &RingNeighborhood, ring: &[LidarPoint], th: &CurbThresholds) -> bool {
    let zs: Vec<f64> = ring[nb.start..nb.end].iter().map(|p| p.z).collect();
    height_values_pass(&zs, th)
}

/// Norm of the summed offsets from the center to every other window
/// member, normalised by window size and center range.
pub fn smoothness(nb: &RingNeighborhood, ring: &[LidarPoint]) -> Result<f64> {
    let center = ring[nb.center].position();
    let norm = center.norm();
    if norm == 0.0 {
        return Err(Error::UndefinedSmoothness);
    }
    let sum = (nb.start..nb.end)
        .filter(|&j| j != nb.center)
        .fold(nalgebra::Vector3::zeros(), |acc, j| acc + (center - ring[j].position()));
    Ok(sum.norm() / (nb.n_neighbor() as f64 * norm))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    /// Arc length the neighbourhood should cover on each side, meters.
    pub target_span: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            target_span: 1.0,
            delta_min: 0.02,
            delta_max: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveWindow {
    /// Spacing before clamping, meters.
    pub raw_delta: f64,
    pub delta: f64,
    pub window_halfwidth: usize,
    /// Set when the ring is horizontal and the spacing is unbounded.
    pub horizontal_beam: bool,
}

/// Expected spacing `Hs * cot(theta_r) * pi * theta_a` for a ring,
/// clamped, and the half-width that covers `target_span`.
pub fn adaptive_window(geom: &LidarGeometry, ring: usize, params: &WindowParams) -> AdaptiveWindow {
    let theta_r = geom.ring_elevations[ring];
    let horizontal_beam = theta_r == 0.0;
    let raw_delta = if horizontal_beam {
        f64::INFINITY
    } else {
        (geom.sensor_height * (theta_r.cos() / theta_r.sin()) * PI * geom.horizontal_resolution).abs()
    };
    if horizontal_beam {
        log::warn!("ring {ring} is horizontal; spacing clamped to {}", params.delta_max);
    }
    let delta = raw_delta.clamp(params.delta_min, params.delta_max);
    let window_halfwidth = ((params.target_span / delta).ceil() as usize).max(1);
    AdaptiveWindow {
        raw_delta,
        delta,
        window_halfwidth,
        horizontal_beam,
    }
}

/// Ground points passing both the height-difference and smoothness gates.
/// Returns indices into `cloud`, ascending.
pub fn extract_candidates(
    cloud: &LabeledCloud,
    th: &CurbThresholds,
    geom: &LidarGeometry,
    window: &WindowParams,
) -> Vec<usize> {
    let mut out = Vec::new();
    let pts = cloud.points();
    for ring_list in split_into_rings_where(cloud, |l| l == Label::Ground) {
        let ring_idx = (ring_list.ring as usize).min(geom.ring_count() - 1);
        let hw = adaptive_window(geom, ring_idx, window).window_halfwidth;
        let ring: Vec<LidarPoint> = ring_list.indices.iter().map(|&i| pts[i]).collect();
        for c in 0..ring.len() {
            let Some(nb) = RingNeighborhood::around(c, hw, ring.len()) else {
                continue;
            };
            if !height_difference_pass(&nb, &ring, th) {
                continue;
            }
            match smoothness(&nb, &ring) {
                Ok(s) if s >= th.ts => out.push(ring_list.indices[c]),
                _ => {}
            }
        }
    }
    out.sort_unstable();
    out
}
