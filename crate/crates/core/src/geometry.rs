//! Point, cloud, pose and sensor types shared by every stage.
//!
//! Sensor frame convention: x forward, y left, z up, meters.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default forward truncation applied before curb detection, meters.
pub const DEFAULT_FORWARD_LIMIT: f64 = 30.0;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Per-point semantic class. The discriminant is the on-disk id used by
/// map and detection label files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Label {
    Other = 0,
    Ground = 1,
    Drivable = 2,
    CurbLeft = 3,
    CurbRight = 4,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::Other,
        Label::Ground,
        Label::Drivable,
        Label::CurbLeft,
        Label::CurbRight,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Label> {
        Label::ALL.get(id as usize).copied()
    }

    pub fn is_curb(self) -> bool {
        matches!(self, Label::CurbLeft | Label::CurbRight)
    }

    /// Classes a semantic map is allowed to hold.
    pub fn is_mappable(self) -> bool {
        matches!(self, Label::Drivable | Label::CurbLeft | Label::CurbRight)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f32,
    pub ring: u16,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            intensity: 0.0,
            ring: 0,
        }
    }

    pub fn with_intensity(mut self, intensity: f32) -> Self {
        self.intensity = intensity;
        self
    }

    pub fn with_ring(mut self, ring: u16) -> Self {
        self.ring = ring;
        self
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn set_position(&mut self, p: &Vector3<f64>) {
        self.x = p.x;
        self.y = p.y;
        self.z = p.z;
    }

    pub fn azimuth(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn horizontal_range(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn elevation(&self) -> f64 {
        self.z.atan2(self.horizontal_range())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// An ordered point set with one label per point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledCloud {
    frame_id: u32,
    points: Vec<LidarPoint>,
    labels: Vec<Label>,
}

impl LabeledCloud {
    pub fn new(frame_id: u32) -> Self {
        Self {
            frame_id,
            ..Default::default()
        }
    }

    /// Every point starts out labeled [`Label::Other`].
    pub fn from_points(frame_id: u32, points: Vec<LidarPoint>) -> Self {
        let labels = vec![Label::Other; points.len()];
        Self {
            frame_id,
            points,
            labels,
        }
    }

    pub fn from_parts(frame_id: u32, points: Vec<LidarPoint>, labels: Vec<Label>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        Ok(Self {
            frame_id,
            points,
            labels,
        })
    }

    pub fn frame_id(&self) -> u32 {
        self.frame_id
    }

    pub fn set_frame_id(&mut self, frame_id: u32) {
        self.frame_id = frame_id;
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LidarPoint] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [LidarPoint] {
        &mut self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [Label] {
        &mut self.labels
    }

    pub fn push(&mut self, point: LidarPoint, label: Label) {
        self.points.push(point);
        self.labels.push(label);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LidarPoint, Label)> {
        self.points.iter().zip(self.labels.iter().copied())
    }

    pub fn into_parts(self) -> (u32, Vec<LidarPoint>, Vec<Label>) {
        (self.frame_id, self.points, self.labels)
    }

    /// Keeps points for which `keep` returns true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&LidarPoint, Label) -> bool) -> LabeledCloud {
        let mut out = LabeledCloud::new(self.frame_id);
        for (p, l) in self.iter() {
            if keep(p, l) {
                out.push(*p, l);
            }
        }
        out
    }

    pub fn with_label(&self, label: Label) -> LabeledCloud {
        self.filter(|_, l| l == label)
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(LidarPoint::position).collect()
    }
}

/// Rigid transform p -> R p + t.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, ORTHONORMAL_TOL)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation about +z by `yaw` radians followed by translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::from_euler(0.0, 0.0, yaw, translation)
    }

    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        let r = Rotation3::from_euler_angles(roll, pitch, yaw);
        Self {
            rotation: r.into_inner(),
            translation,
        }
    }

    /// Exponential map of a rotation vector (axis * angle) with a plain
    /// translation.
    pub fn from_rotation_vector(omega: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::new(omega).into_inner(),
            translation,
        }
    }

    /// Projects an approximately orthonormal matrix onto SO(3) via SVD.
    /// Rejects matrices whose drift exceeds `max_drift` or whose determinant
    /// is not positive.
    pub fn repaired(rotation: Matrix3<f64>, translation: Vector3<f64>, max_drift: f64) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entries".into()));
        }
        let det = rotation.determinant();
        if det <= 0.0 {
            return Err(Error::InvalidPose(format!("det(R) = {det} <= 0")));
        }
        let drift = orthonormal_drift(&rotation);
        if drift > max_drift {
            return Err(Error::InvalidPose(format!(
                "rotation drift {drift:.3e} exceeds {max_drift:.1e}"
            )));
        }
        let rotation = if drift > 1e-6 {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Heading of the rotated x axis in the xy plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Geodesic rotation angle between two poses, radians.
    pub fn rotation_angle_to(&self, other: &PoseSE3) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn translation_distance_to(&self, other: &PoseSE3) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Row-major 3x4 `[R | t]`.
    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn split_row_major_3x4(v: &[f64; 12]) -> (Matrix3<f64>, Vector3<f64>) {
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        (r, Vector3::new(v[3], v[7], v[11]))
    }
}

pub(crate) fn orthonormal_drift(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidPose("non-finite rotation".into()));
    }
    let drift = orthonormal_drift(r);
    if drift > tol {
        return Err(Error::InvalidPose(format!("R^T R deviates from I by {drift:.3e}")));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tol {
        return Err(Error::InvalidPose(format!("det(R) = {det}")));
    }
    Ok(())
}

pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Pinhole intrinsics in the rectified `P_rect` layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fu: f64,
    pub fv: f64,
    pub cu: f64,
    pub cv: f64,
    pub bx: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fu: f64, fv: f64, cu: f64, cv: f64, bx: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fu,
            fv,
            cu,
            cv,
            bx,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fu > 0.0 && self.fv > 0.0) {
            return Err(Error::InvalidCalib("focal lengths must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cu) || !(0.0..self.height as f64).contains(&self.cv) {
            return Err(Error::InvalidCalib(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cu, self.cv, self.width, self.height
            )));
        }
        Ok(())
    }

    /// The 3x4 projection matrix, row-major.
    pub fn p_rect(&self) -> [f64; 12] {
        [
            self.fu, 0.0, self.cu, -self.fu * self.bx,
            0.0, self.fv, self.cv, 0.0,
            0.0, 0.0, 1.0, 0.0,
        ]
    }

    /// KITTI-like color camera used by the synthetic sequences.
    pub fn kitti_like() -> Self {
        Self {
            fu: 721.5377,
            fv: 721.5377,
            cu: 609.5593,
            cv: 172.854,
            bx: 0.0,
            width: 1242,
            height: 375,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrinsics {
    pub lidar_to_camera: PoseSE3,
}

impl Extrinsics {
    /// Camera mounted 0.27 m behind and 0.08 m below the LiDAR, looking
    /// along the LiDAR x axis (camera x right, y down, z forward).
    pub fn kitti_like() -> Self {
        let r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        let camera_in_lidar = Vector3::new(-0.27, 0.0, -0.08);
        let t = -(r * camera_in_lidar);
        Self {
            lidar_to_camera: PoseSE3 {
                rotation: r,
                translation: t,
            },
        }
    }
}

/// Spinning-LiDAR geometry used for ring recovery and window sizing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarGeometry {
    pub sensor_height: f64,
    pub horizontal_resolution: f64,
    pub ring_elevations: Vec<f64>,
}

impl LidarGeometry {
    pub fn new(sensor_height: f64, horizontal_resolution: f64, ring_elevations: Vec<f64>) -> Result<Self> {
        let geom = Self {
            sensor_height,
            horizontal_resolution,
            ring_elevations,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizontal_resolution > 0.0) {
            return Err(Error::InvalidArgument("horizontal resolution must be > 0".into()));
        }
        if self.ring_elevations.is_empty() {
            return Err(Error::InvalidArgument("at least one ring required".into()));
        }
        let e = &self.ring_elevations;
        let inc = e.windows(2).all(|w| w[1] > w[0]);
        let dec = e.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::InvalidArgument("ring elevations must be strictly monotone".into()));
        }
        Ok(())
    }

    /// `count` rings evenly spaced between `lowest_deg` and `highest_deg`.
    pub fn uniform(sensor_height: f64, resolution_deg: f64, lowest_deg: f64, highest_deg: f64, count: usize) -> Self {
        let step = if count > 1 {
            (highest_deg - lowest_deg) / (count - 1) as f64
        } else {
            0.0
        };
        Self {
            sensor_height,
            horizontal_resolution: resolution_deg.to_radians(),
            ring_elevations: (0..count)
                .map(|i| (lowest_deg + step * i as f64).to_radians())
                .collect(),
        }
    }

    /// 32 rings from -25 to +3 degrees, 0.2 degree azimuth steps, mounted
    /// 1.73 m above the road.
    pub fn kitti_like() -> Self {
        Self::uniform(1.73, 0.2, -25.0, 3.0, 32)
    }

    pub fn ring_count(&self) -> usize {
        self.ring_elevations.len()
    }

    /// Index of the ring whose elevation is nearest; ties go to the lower
    /// index.
    pub fn nearest_ring(&self, elevation: f64) -> u16 {
        let mut best = 0usize;
        let mut best_diff = f64::INFINITY;
        for (i, &e) in self.ring_elevations.iter().enumerate() {
            let d = (elevation - e).abs();
            if d < best_diff {
                best = i;
                best_diff = d;
            }
        }
        best as u16
    }

    pub fn azimuth_steps(&self) -> usize {
        (2.0 * PI / self.horizontal_resolution).round() as usize
    }
}

/// Serialized as the row-major 3x4 matrix `[R | t]`.
impl Serialize for PoseSE3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major_3x4().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseSE3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 12]>::deserialize(d)?;
        let (r, t) = PoseSE3::split_row_major_3x4(&v);
        PoseSE3::repaired(r, t, 1e-3).map_err(serde::de::Error::custom)
    }
}

pub fn compose(a: &PoseSE3, b: &PoseSE3) -> PoseSE3 {
    a.compose(b)
}

/// Maps every point through `pose`; labels, order and per-point attributes
/// are preserved.
pub fn transform_cloud(cloud: &LabeledCloud, pose: &PoseSE3) -> LabeledCloud {
    let mut out = cloud.clone();
    for p in out.points_mut() {
        let q = pose.transform_point(&p.position());
        p.set_position(&q);
    }
    out
}

/// Assigns each point the ring whose elevation is nearest. Returns the
/// indices of points at the sensor origin, which get ring 0.
pub fn assign_rings_report(mut cloud: LabeledCloud, geom: &LidarGeometry) -> (LabeledCloud, Vec<usize>) {
    let mut at_origin = Vec::new();
    for (i, p) in cloud.points_mut().iter_mut().enumerate() {
        if p.horizontal_range() == 0.0 && p.z == 0.0 {
            p.ring = 0;
            at_origin.push(i);
        } else {
            p.ring = geom.nearest_ring(p.elevation());
        }
    }
    if !at_origin.is_empty() {
        log::warn!("{} point(s) at the sensor origin assigned ring 0", at_origin.len());
    }
    (cloud, at_origin)
}

pub fn assign_rings(cloud: LabeledCloud, geom: &LidarGeometry) -> LabeledCloud {
    assign_rings_report(cloud, geom).0
}

/// Keeps points with `0 < x <= limit`.
pub fn crop_forward(cloud: &LabeledCloud, limit: f64) -> LabeledCloud {
    cloud.filter(|p, _| p.x > 0.0 && p.x <= limit)
}
