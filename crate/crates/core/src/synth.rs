//! Parametric road scenes with closed-form ground truth: a straight
//! segment followed by a circular arc, curbs and sidewalks on both sides,
//! optional walls and box obstacles, plus an exact ray-cast LiDAR and a
//! camera truth-mask renderer.

use std::f64::consts::PI;
use std::path::Path;

use image::RgbImage;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Extrinsics, Label, LabeledCloud, LidarGeometry, LidarPoint, PoseSE3};
use crate::labels::project::project_camera_point;
use crate::labels::{rasterize_mask, LabelMask};

const MAX_RAY_RANGE: f64 = 120.0;
const NEAR_PLANE: f64 = 0.1;
const CURB_SAMPLE_STEP: f64 = 0.1;
const POLYGON_STEP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxObstacle {
    /// World-frame center, meters.
    pub center: [f64; 3],
    /// Full extents along world x, y, z.
    pub size: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub road_width: f64,
    pub curb_height: f64,
    /// Signed curvature of the arc after the straight part; positive turns left.
    pub curvature: f64,
    pub straight_length: f64,
    /// Total centerline length, straight part included.
    pub length: f64,
    pub sidewalk_width: f64,
    /// Height of the wall behind the sidewalk; 0 disables it.
    pub wall_height: f64,
    pub obstacles: Vec<BoxObstacle>,
    pub seed: u64,
    /// Standard deviation of additive range noise; 0 disables it.
    pub range_noise: f64,
    pub frame_count: usize,
    pub frame_spacing: f64,
    pub first_station: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            road_width: 8.0,
            curb_height: 0.2,
            curvature: 0.01,
            straight_length: 40.0,
            length: 160.0,
            sidewalk_width: 3.0,
            wall_height: 2.0,
            obstacles: Vec::new(),
            seed: 0,
            range_noise: 0.0,
            frame_count: 50,
            frame_spacing: 1.5,
            first_station: 10.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("scene: {m}")));
        if !(self.road_width > 0.0) {
            return bad("road_width must be positive");
        }
        if !(self.curb_height >= 0.0) || !(self.sidewalk_width >= 0.0) || !(self.wall_height >= 0.0) {
            return bad("curb_height, sidewalk_width and wall_height must be non-negative");
        }
        if !(self.length > 0.0) || !(0.0..=self.length).contains(&self.straight_length) {
            return bad("need 0 <= straight_length <= length");
        }
        if !(self.curvature.abs() * (self.length - self.straight_length) < PI) {
            return bad("arc would turn through pi or more");
        }
        if self.curvature != 0.0 && 1.0 / self.curvature.abs() <= self.half_extent() {
            return bad("radius smaller than the road cross-section");
        }
        if !(self.range_noise >= 0.0) || !(self.frame_spacing > 0.0) {
            return bad("range_noise must be non-negative and frame_spacing positive");
        }
        let last = self.first_station + self.frame_spacing * self.frame_count.saturating_sub(1) as f64;
        if self.first_station < 0.0 || last > self.length {
            return bad("frames must lie on the centerline");
        }
        Ok(())
    }

    fn half_extent(&self) -> f64 {
        0.5 * self.road_width + self.sidewalk_width
    }

    pub fn frame_stations(&self) -> Vec<f64> {
        (0..self.frame_count)
            .map(|k| self.first_station + k as f64 * self.frame_spacing)
            .collect()
    }

    /// Centerline point and heading at station `s`.
    pub fn centerline(&self, s: f64) -> ([f64; 2], f64) {
        let l0 = self.straight_length;
        if s <= l0 || self.curvature == 0.0 {
            return ([s, 0.0], 0.0);
        }
        let r = 1.0 / self.curvature;
        let psi = (s - l0) * self.curvature;
        ([l0 + r * psi.sin(), r - r * psi.cos()], psi)
    }

    /// Point offset `d` to the left of the centerline at station `s`.
    pub fn offset_point(&self, s: f64, d: f64) -> [f64; 2] {
        let (c, h) = self.centerline(s);
        [c[0] - d * h.sin(), c[1] + d * h.cos()]
    }

    /// Station and signed lateral offset (left positive) of a world point.
    pub fn road_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let l0 = self.straight_length;
        if x <= l0 || self.curvature == 0.0 {
            return (x, y);
        }
        let sign = self.curvature.signum();
        let r = 1.0 / self.curvature.abs();
        let ym = sign * y;
        let psi = (x - l0).atan2(r - ym);
        let rho = (x - l0).hypot(r - ym);
        (l0 + psi * r, sign * (r - rho))
    }

    fn height_at(&self, x: f64, y: f64) -> (f64, Surface) {
        let (_, d) = self.road_coords(x, y);
        let a = d.abs();
        if a < 0.5 * self.road_width {
            (0.0, Surface::Road)
        } else if a < self.half_extent() || self.wall_height == 0.0 {
            (self.curb_height, Surface::Sidewalk(d > 0.0))
        } else {
            (self.curb_height + self.wall_height, Surface::Plateau)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Surface {
    Road,
    /// `true` on the left side.
    Sidewalk(bool),
    Plateau,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub spec: SceneSpec,
    /// World-frame curb lines at mid-height of the curb face.
    pub left_curb: Vec<Vector3<f64>>,
    pub right_curb: Vec<Vector3<f64>>,
    /// Road surface outline in the world xy plane (z = 0).
    pub drivable_polygon: Vec<[f64; 2]>,
    /// LiDAR poses at the frame stations.
    pub poses: Vec<PoseSE3>,
}

impl GroundTruth {
    pub fn curb_points(&self) -> Vec<Vector3<f64>> {
        self.left_curb.iter().chain(&self.right_curb).copied().collect()
    }

    pub fn frame_station(&self, frame: usize) -> f64 {
        self.spec.first_station + frame as f64 * self.spec.frame_spacing
    }

    /// Stations covered by the sequence when every frame observes the road
    /// from `near` to `far` meters ahead.
    pub fn observed_stations(&self, near: f64, far: f64) -> (f64, f64) {
        let last = self.frame_station(self.poses.len().saturating_sub(1));
        (self.spec.first_station + near, (last + far).min(self.spec.length))
    }

    /// Truth curb samples in the sensor frame of `pose` that lie within
    /// `radius` of it and inside the station interval `stations`.
    pub fn curbs_in_region(&self, pose: &PoseSE3, radius: f64, stations: (f64, f64)) -> LabeledCloud {
        let inv = pose.inverse();
        let mut out = LabeledCloud::new(0);
        for (line, label) in [(&self.left_curb, Label::CurbLeft), (&self.right_curb, Label::CurbRight)] {
            for p in line {
                let (s, _) = self.spec.road_coords(p.x, p.y);
                if s < stations.0 || s > stations.1 || (p - pose.translation()).norm() > radius {
                    continue;
                }
                let q = inv.transform_point(p);
                out.push(LidarPoint::new(q.x, q.y, q.z), label);
            }
        }
        out
    }
}

fn sample_line(spec: &SceneSpec, d: f64, step: f64) -> Vec<[f64; 2]> {
    let n = (spec.length / step).round() as usize;
    (0..=n)
        .map(|k| spec.offset_point((k as f64 * step).min(spec.length), d))
        .collect()
}

/// As [`sample_line`], but on the outer side of the arc the vertices are
/// pushed out so that every chord stays outside the true boundary.
fn sample_outline(spec: &SceneSpec, d: f64, step: f64) -> Vec<[f64; 2]> {
    let mut pts = sample_line(spec, d, step);
    if spec.curvature * d < 0.0 {
        let scale = 1.0 / (0.5 * step * spec.curvature.abs()).cos();
        let c = [spec.straight_length, 1.0 / spec.curvature];
        for p in pts.iter_mut().filter(|p| p[0] > spec.straight_length) {
            *p = [c[0] + (p[0] - c[0]) * scale, c[1] + (p[1] - c[1]) * scale];
        }
    }
    pts
}

pub fn generate_scene(spec: &SceneSpec, geom: &LidarGeometry) -> Result<GroundTruth> {
    spec.validate()?;
    geom.validate()?;
    let half = 0.5 * spec.road_width;
    let zc = 0.5 * spec.curb_height;
    let curb = |d: f64| {
        sample_line(spec, d, CURB_SAMPLE_STEP)
            .into_iter()
            .map(|p| Vector3::new(p[0], p[1], zc))
            .collect()
    };
    let mut polygon = sample_outline(spec, half, POLYGON_STEP);
    polygon.extend(sample_outline(spec, -half, POLYGON_STEP).into_iter().rev());
    let poses = spec
        .frame_stations()
        .into_iter()
        .map(|s| {
            let (c, h) = spec.centerline(s);
            PoseSE3::from_yaw(h, Vector3::new(c[0], c[1], geom.sensor_height))
        })
        .collect();
    Ok(GroundTruth {
        spec: spec.clone(),
        left_curb: curb(half),
        right_curb: curb(-half),
        drivable_polygon: polygon,
        poses,
    })
}

/// Ray parameters where the horizontal trace crosses a cross-section
/// boundary.
fn boundary_crossings(spec: &SceneSpec, o: &Vector3<f64>, u: &Vector3<f64>, out: &mut Vec<f64>) {
    let mut offsets = vec![0.5 * spec.road_width];
    if spec.wall_height > 0.0 {
        offsets.push(spec.half_extent());
    }
    let l0 = spec.straight_length;
    for &c in &offsets {
        for d in [c, -c] {
            if u.y != 0.0 {
                let t = (d - o.y) / u.y;
                if t > 0.0 && (o.x + t * u.x <= l0 || spec.curvature == 0.0) {
                    out.push(t);
                }
            }
            if spec.curvature != 0.0 {
                let r = 1.0 / spec.curvature;
                let center = [l0, r];
                let radius = (r - d).abs();
                let (px, py) = (o.x - center[0], o.y - center[1]);
                let a = u.x * u.x + u.y * u.y;
                if a == 0.0 {
                    continue;
                }
                let b = 2.0 * (px * u.x + py * u.y);
                let cc = px * px + py * py - radius * radius;
                let disc = b * b - 4.0 * a * cc;
                if disc < 0.0 {
                    continue;
                }
                let sq = disc.sqrt();
                for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                    if t > 0.0 && o.x + t * u.x > l0 {
                        out.push(t);
                    }
                }
            }
        }
    }
}

fn ray_box(o: &Vector3<f64>, u: &Vector3<f64>, b: &BoxObstacle) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        let lo = b.center[k] - 0.5 * b.size[k];
        let hi = b.center[k] + 0.5 * b.size[k];
        if u[k] == 0.0 {
            if o[k] < lo || o[k] > hi {
                return None;
            }
            continue;
        }
        let (mut a, mut c) = ((lo - o[k]) / u[k], (hi - o[k]) / u[k]);
        if a > c {
            std::mem::swap(&mut a, &mut c);
        }
        t0 = t0.max(a);
        t1 = t1.min(c);
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

/// First surface hit along a world ray with unit direction `u`.
fn cast(spec: &SceneSpec, o: &Vector3<f64>, u: &Vector3<f64>, scratch: &mut Vec<f64>) -> Option<(f64, Label)> {
    scratch.clear();
    scratch.push(0.0);
    boundary_crossings(spec, o, u, scratch);
    scratch.retain(|&t| t < MAX_RAY_RANGE);
    scratch.push(MAX_RAY_RANGE);
    scratch.sort_by(f64::total_cmp);
    let mut hit = None;
    for w in scratch.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        if tb <= ta {
            continue;
        }
        let tm = 0.5 * (ta + tb);
        let (h, surface) = spec.height_at(o.x + tm * u.x, o.y + tm * u.y);
        let za = o.z + ta * u.z;
        if za < h {
            // Entered a raised region below its top: vertical face.
            let label = match surface {
                Surface::Sidewalk(true) => Label::CurbLeft,
                Surface::Sidewalk(false) => Label::CurbRight,
                _ => Label::Other,
            };
            hit = Some((ta, label));
            break;
        }
        if u.z < 0.0 {
            let th = (h - o.z) / u.z;
            if th >= ta && th <= tb {
                let label = if surface == Surface::Road {
                    Label::Drivable
                } else {
                    Label::Other
                };
                hit = Some((th, label));
                break;
            }
        }
    }
    let boxed = spec
        .obstacles
        .iter()
        .filter_map(|b| ray_box(o, u, b))
        .fold(None::<f64>, |m, t| Some(m.map_or(t, |m| m.min(t))));
    match (hit, boxed) {
        (Some((t, _)), Some(tb)) if tb < t => Some((tb, Label::Other)),
        (None, Some(tb)) if tb < MAX_RAY_RANGE => Some((tb, Label::Other)),
        (h, _) => h,
    }
}

/// Ring-structured scan in the sensor frame. Labels carry the surface
/// truth: `Drivable` road, `CurbLeft`/`CurbRight` curb faces, `Other`
/// everything else.
pub fn simulate_scan(truth: &GroundTruth, pose: &PoseSE3, geom: &LidarGeometry) -> LabeledCloud {
    simulate_scan_seeded(truth, pose, geom, truth.spec.seed)
}

fn simulate_scan_seeded(truth: &GroundTruth, pose: &PoseSE3, geom: &LidarGeometry, seed: u64) -> LabeledCloud {
    let spec = &truth.spec;
    let steps = geom.azimuth_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (spec.range_noise > 0.0).then(|| Normal::new(0.0, spec.range_noise).expect("positive sigma"));
    let o = *pose.translation();
    let rot = *pose.rotation();
    let mut cloud = LabeledCloud::new(0);
    let mut scratch = Vec::new();
    for a in 0..steps {
        let az = -PI + a as f64 * geom.horizontal_resolution;
        for (ring, &el) in geom.ring_elevations.iter().enumerate() {
            let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let Some((t, label)) = cast(spec, &o, &(rot * dir), &mut scratch) else {
                continue;
            };
            let t = match &noise {
                Some(n) => (t + n.sample(&mut rng)).max(0.01),
                None => t,
            };
            let p = dir * t;
            cloud.push(LidarPoint::new(p.x, p.y, p.z).with_ring(ring as u16), label);
        }
    }
    cloud
}

/// Camera-frame points with `z >= near` of a planar polygon.
fn clip_near(poly: &[Vector3<f64>], near: f64) -> Vec<Vector3<f64>> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 4);
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (ia, ib) = (a.z >= near, b.z >= near);
        if ia {
            out.push(a);
        }
        if ia != ib {
            let t = (near - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraTruth {
    pub mask: LabelMask,
    /// The drivable region lies entirely outside the view.
    pub empty: bool,
}

pub fn simulate_camera_truth(
    truth: &GroundTruth,
    pose: &PoseSE3,
    intr: &CameraIntrinsics,
    extr: &Extrinsics,
) -> CameraTruth {
    let world_to_cam = extr.lidar_to_camera.compose(&pose.inverse());
    let cam: Vec<Vector3<f64>> = truth
        .drivable_polygon
        .iter()
        .map(|p| world_to_cam.transform_point(&Vector3::new(p[0], p[1], 0.0)))
        .collect();
    let clipped = clip_near(&cam, NEAR_PLANE);
    let poly: Vec<[f64; 2]> = clipped
        .iter()
        .filter_map(|p| project_camera_point(p, intr))
        .map(|px| [px.u, px.v])
        .collect();
    let mask = rasterize_mask(&poly, intr.width, intr.height);
    let empty = mask.count_on() == 0;
    CameraTruth { mask, empty }
}

/// Flat-shaded stand-in for the camera image: road, verge and sky.
pub fn render_rgb(mask: &LabelMask, intr: &CameraIntrinsics) -> RgbImage {
    RgbImage::from_fn(mask.width(), mask.height(), |x, y| {
        if mask.get(x, y) {
            image::Rgb([96, 96, 100])
        } else if (y as f64) < intr.cv {
            image::Rgb([150, 180, 215])
        } else {
            image::Rgb([80, 120, 70])
        }
    })
}

/// Layout of a generated sequence directory.
pub struct SequenceLayout;

impl SequenceLayout {
    pub const SCANS: &'static str = "scans";
    pub const POSES: &'static str = "poses.txt";
    pub const CALIB: &'static str = "calib.txt";
    pub const TRUTH_MASKS: &'static str = "truth_masks";
    pub const IMAGES: &'static str = "images";
    pub const TRUTH_DIR: &'static str = "truth";
    pub const LEFT_CURB: &'static str = "truth/curb_left.bin";
    pub const RIGHT_CURB: &'static str = "truth/curb_right.bin";
    pub const SCENE: &'static str = "truth/scene.json";
}

pub fn frame_file(frame: usize, ext: &str) -> String {
    format!("{frame:06}.{ext}")
}

fn curb_cloud(points: &[Vector3<f64>], label: Label) -> LabeledCloud {
    let pts = points.iter().map(|p| LidarPoint::new(p.x, p.y, p.z)).collect::<Vec<_>>();
    let n = pts.len();
    LabeledCloud::from_parts(0, pts, vec![label; n]).expect("equal lengths")
}

/// Writes scans, poses, calibration, truth masks, images and truth curbs.
pub fn write_sequence(
    truth: &GroundTruth,
    geom: &LidarGeometry,
    intr: &CameraIntrinsics,
    extr: &Extrinsics,
    out: &Path,
) -> Result<()> {
    use crate::io;
    truth.poses.par_iter().enumerate().try_for_each(|(k, pose)| -> Result<()> {
        let mut scan = simulate_scan_seeded(truth, pose, geom, truth.spec.seed.wrapping_add(k as u64));
        scan.set_frame_id(k as u32);
        io::write_scan_bin(&out.join(SequenceLayout::SCANS).join(frame_file(k, "bin")), &scan)?;
        let cam = simulate_camera_truth(truth, pose, intr, extr);
        cam.mask
            .save_png(&out.join(SequenceLayout::TRUTH_MASKS).join(frame_file(k, "png")))?;
        let mut bytes = Vec::new();
        render_rgb(&cam.mask, intr).write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
        io::write_atomic(&out.join(SequenceLayout::IMAGES).join(frame_file(k, "png")), &bytes)
    })?;
    io::write_poses(&out.join(SequenceLayout::POSES), &truth.poses)?;
    io::write_calib(&out.join(SequenceLayout::CALIB), intr, extr)?;
    io::write_point_set(&out.join(SequenceLayout::LEFT_CURB), &curb_cloud(&truth.left_curb, Label::CurbLeft))?;
    io::write_point_set(&out.join(SequenceLayout::RIGHT_CURB), &curb_cloud(&truth.right_curb, Label::CurbRight))?;
    io::write_atomic(
        &out.join(SequenceLayout::SCENE),
        serde_json::to_string_pretty(&truth.spec)?.as_bytes(),
    )
}
