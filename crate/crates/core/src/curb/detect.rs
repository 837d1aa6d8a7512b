use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::beam::{build_beam_model, classify_left_right, estimate_road_direction, BeamParams, RoadDirection};
use super::features::{extract_candidates, CurbThresholds, WindowParams};
use super::gpr::{gpr_filter, GprParams};
use crate::error::{Error, Result, StageExt};
use crate::geometry::{Label, LabeledCloud, LidarGeometry, LidarPoint, DEFAULT_FORWARD_LIMIT};
use crate::ground::{segment_ground, GroundParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurbParams {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub ts: f64,
    pub window_span: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub forward_limit: f64,
    /// Boundaries are extended at constant offset back toward the sensor
    /// by at most this much when labelling drivable ground, meters.
    pub near_extension: f64,
    /// As `near_extension`, beyond the farthest boundary sample.
    pub far_extension: f64,
    pub beam: BeamParams,
}

impl Default for CurbParams {
    fn default() -> Self {
        let th = CurbThresholds::default();
        let w = WindowParams::default();
        Self {
            h1: th.h1,
            h2: th.h2,
            h3: th.h3,
            ts: th.ts,
            window_span: w.target_span,
            delta_min: w.delta_min,
            delta_max: w.delta_max,
            forward_limit: DEFAULT_FORWARD_LIMIT,
            near_extension: 6.0,
            far_extension: 8.0,
            beam: BeamParams::default(),
        }
    }
}

impl CurbParams {
    pub fn thresholds(&self) -> CurbThresholds {
        CurbThresholds {
            h1: self.h1,
            h2: self.h2,
            h3: self.h3,
            ts: self.ts,
        }
    }

    pub fn window(&self) -> WindowParams {
        WindowParams {
            target_span: self.window_span,
            delta_min: self.delta_min,
            delta_max: self.delta_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds().validate()?;
        self.beam.validate()?;
        if !(self.window_span > 0.0 && 0.0 < self.delta_min && self.delta_min <= self.delta_max) {
            return Err(Error::InvalidArgument("invalid curb window parameters".into()));
        }
        if !(self.near_extension >= 0.0 && self.far_extension >= 0.0) {
            return Err(Error::InvalidArgument("boundary extensions must be non-negative".into()));
        }
        if self.forward_limit <= 0.0 {
            return Err(Error::InvalidArgument("forward limit must be positive".into()));
        }
        Ok(())
    }
}

/// Per-frame detection result. `labels` runs parallel to the input scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurbDetection {
    pub frame_id: u32,
    pub road_direction: RoadDirection,
    pub left: Vec<[f64; 3]>,
    pub right: Vec<[f64; 3]>,
    /// Fitted boundary samples in the sensor frame, ordered along the road.
    pub boundary_left: Vec<[f64; 2]>,
    pub boundary_right: Vec<[f64; 2]>,
    pub residual_rms: f64,
    pub low_confidence: bool,
    pub warnings: Vec<String>,
    /// Not part of the JSON form; stored separately as a `.label` file.
    #[serde(skip)]
    pub labels: Vec<Label>,
}

impl CurbDetection {
    pub fn curb_count(&self) -> usize {
        self.left.len() + self.right.len()
    }

    /// Applies the stored labels to the scan they were computed from.
    pub fn labeled_cloud(&self, scan: &[LidarPoint]) -> Result<LabeledCloud> {
        LabeledCloud::from_parts(self.frame_id, scan.to_vec(), self.labels.clone())
    }
}

/// Road-aligned coordinates: `u` along the road, `v` to its left.
fn to_road(p: &Vector3<f64>, d: &RoadDirection) -> [f64; 2] {
    let (s, c) = d.angle.sin_cos();
    [p.x * c + p.y * s, -p.x * s + p.y * c]
}

fn from_road(uv: [f64; 2], d: &RoadDirection) -> [f64; 2] {
    let (s, c) = d.angle.sin_cos();
    [uv[0] * c - uv[1] * s, uv[0] * s + uv[1] * c]
}

/// Piecewise-linear lookup in samples sorted by `u`, held constant for
/// `near` below the first sample and `far` beyond the last.
fn lookup(samples: &[[f64; 2]], u: f64, near: f64, far: f64) -> Option<f64> {
    let first = samples.first()?;
    let last = samples.last()?;
    if u < first[0] {
        return (u >= first[0] - near).then_some(first[1]);
    }
    if u > last[0] {
        return (u <= last[0] + far).then_some(last[1]);
    }
    let k = samples.partition_point(|s| s[0] <= u);
    if k == samples.len() {
        return Some(last[1]);
    }
    let (a, b) = (samples[k - 1], samples[k]);
    let t = (u - a[0]) / (b[0] - a[0]);
    Some(a[1] + t * (b[1] - a[1]))
}

struct SideFit {
    inliers: Vec<usize>,
    boundary_uv: Vec<[f64; 2]>,
    sq_residual: f64,
}

fn fit_side(uv: &[[f64; 2]], idx: &[usize], gpr: &GprParams, warnings: &mut Vec<String>, side: &str) -> Result<SideFit> {
    let pts: Vec<[f64; 2]> = idx.iter().map(|&i| uv[i]).collect();
    let r = gpr_filter(&pts, gpr)?;
    if r.passthrough {
        warnings.push(format!("{side}: {} candidates, GP filter skipped", pts.len()));
    }
    Ok(SideFit {
        inliers: r.inliers.iter().map(|&k| idx[k]).collect(),
        boundary_uv: r.boundary,
        sq_residual: r.residual_rms.powi(2) * r.inliers.len() as f64,
    })
}

/// Crop, ground segmentation, feature gating, left/right split and GP
/// filtering for one scan.
pub fn detect_curbs(
    frame: &LabeledCloud,
    geom: &LidarGeometry,
    ground: &GroundParams,
    params: &CurbParams,
    gpr: &GprParams,
) -> Result<CurbDetection> {
    params.validate()?;
    let n = frame.len();
    let kept: Vec<usize> = (0..n)
        .filter(|&i| {
            let p = &frame.points()[i];
            p.is_finite() && p.x > 0.0 && p.x <= params.forward_limit
        })
        .collect();
    let cropped = frame.filter(|p, _| p.is_finite() && p.x > 0.0 && p.x <= params.forward_limit);
    let mut warnings = Vec::new();
    let mut labels = vec![Label::Other; n];
    if cropped.is_empty() {
        warnings.push("no points in the forward region".into());
        return Ok(CurbDetection {
            frame_id: frame.frame_id(),
            road_direction: RoadDirection {
                angle: 0.0,
                low_confidence: true,
            },
            left: vec![],
            right: vec![],
            boundary_left: vec![],
            boundary_right: vec![],
            residual_rms: 0.0,
            low_confidence: true,
            warnings,
            labels,
        });
    }
    let segmented = segment_ground(&cropped, ground).stage("ground-segmentation")?;
    let candidates = extract_candidates(&segmented, &params.thresholds(), geom, &params.window());

    let non_ground: Vec<LidarPoint> = segmented.with_label(Label::Other).points().to_vec();
    let beam = build_beam_model(&non_ground, &params.beam);
    let direction = estimate_road_direction(&beam, &params.beam);

    let cand_pos: Vec<Vector3<f64>> = candidates.iter().map(|&i| segmented.points()[i].position()).collect();
    let (left_k, right_k) = classify_left_right(&cand_pos, &direction);
    let uv: Vec<[f64; 2]> = cand_pos.iter().map(|p| to_road(p, &direction)).collect();
    let left = fit_side(&uv, &left_k, gpr, &mut warnings, "left").stage("curb-filter")?;
    let right = fit_side(&uv, &right_k, gpr, &mut warnings, "right").stage("curb-filter")?;

    for (i, &l) in segmented.labels().iter().enumerate() {
        labels[kept[i]] = l;
    }
    let seg_pts = segmented.points();
    if !left.boundary_uv.is_empty() && !right.boundary_uv.is_empty() {
        for (i, (p, l)) in segmented.iter().enumerate() {
            if l != Label::Ground {
                continue;
            }
            let [u, v] = to_road(&p.position(), &direction);
            if let (Some(vl), Some(vr)) = (
                lookup(&left.boundary_uv, u, params.near_extension, params.far_extension),
                lookup(&right.boundary_uv, u, params.near_extension, params.far_extension),
            ) {
                if vr < v && v < vl {
                    labels[kept[i]] = Label::Drivable;
                }
            }
        }
    }
    let mut left_pts = Vec::new();
    let mut right_pts = Vec::new();
    for &k in &left.inliers {
        let ci = candidates[k];
        labels[kept[ci]] = Label::CurbLeft;
        let p = seg_pts[ci];
        left_pts.push([p.x, p.y, p.z]);
    }
    for &k in &right.inliers {
        let ci = candidates[k];
        labels[kept[ci]] = Label::CurbRight;
        let p = seg_pts[ci];
        right_pts.push([p.x, p.y, p.z]);
    }
    let total = left.inliers.len() + right.inliers.len();
    let residual_rms = if total > 0 {
        ((left.sq_residual + right.sq_residual) / total as f64).sqrt()
    } else {
        0.0
    };
    if total == 0 {
        warnings.push("no curb points detected".into());
    }
    let low_confidence = direction.low_confidence || left_pts.is_empty() || right_pts.is_empty();
    Ok(CurbDetection {
        frame_id: frame.frame_id(),
        road_direction: direction,
        left: left_pts,
        right: right_pts,
        boundary_left: left.boundary_uv.iter().map(|&uv| from_road(uv, &direction)).collect(),
        boundary_right: right.boundary_uv.iter().map(|&uv| from_road(uv, &direction)).collect(),
        residual_rms,
        low_confidence,
        warnings,
        labels,
    })
}
