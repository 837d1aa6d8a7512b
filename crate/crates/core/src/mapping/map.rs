use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Label, LabeledCloud, LidarPoint, PoseSE3};
use crate::spatial::HashGrid;

pub type VoxelKey = [i64; 3];

/// Classes in tie-break order for the per-voxel vote.
const VOTE_ORDER: [Label; 3] = [Label::CurbLeft, Label::CurbRight, Label::Drivable];

/// Cell size of the nearest-neighbour grids, as a multiple of the voxel size.
const INDEX_CELL_FACTOR: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapPoint {
    pub position: Vector3<f64>,
    pub label: Label,
}

/// Voxelized map of drivable and curb points in the world frame, frozen
/// after construction.
#[derive(Clone, Debug)]
pub struct SemanticMap {
    voxel_size: f64,
    frame_count: usize,
    keys: Vec<VoxelKey>,
    points: Vec<MapPoint>,
    all: HashGrid,
    by_class: Vec<(Label, HashGrid, Vec<usize>)>,
}

impl PartialEq for SemanticMap {
    fn eq(&self, other: &Self) -> bool {
        self.voxel_size == other.voxel_size && self.keys == other.keys && self.points == other.points
    }
}

pub(crate) fn voxel_key(p: &Vector3<f64>, voxel: f64) -> VoxelKey {
    [
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    ]
}

/// Nearest `f32` to `v` whose voxel index along one axis is still `index`.
fn snap_f32(v: f64, index: i64, voxel: f64) -> f64 {
    let mut r = v as f32;
    for _ in 0..8 {
        let k = (r as f64 / voxel).floor() as i64;
        if k == index {
            break;
        }
        r = if k < index { r.next_up() } else { r.next_down() };
    }
    r as f64
}

fn check_voxel(voxel_size: f64) -> Result<()> {
    if voxel_size > 0.0 && voxel_size.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("voxel_size must be positive, got {voxel_size}")))
    }
}

impl SemanticMap {
    /// Builds the map from cells sorted by key. Positions are rounded to
    /// `f32`, staying inside their voxel, so that the PLY round trip is exact.
    pub(crate) fn from_cells(voxel_size: f64, frame_count: usize, cells: Vec<(VoxelKey, MapPoint)>) -> Result<Self> {
        check_voxel(voxel_size)?;
        let mut keys = Vec::with_capacity(cells.len());
        let mut points = Vec::with_capacity(cells.len());
        for (k, mut p) in cells {
            if !p.label.is_mappable() {
                return Err(Error::MapFormat(format!("label {:?} cannot be stored in a map", p.label)));
            }
            for (axis, v) in p.position.iter_mut().enumerate() {
                *v = snap_f32(*v, k[axis], voxel_size);
            }
            keys.push(k);
            points.push(p);
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::MapFormat("duplicate or unsorted voxel keys".into()));
        }
        let cell = voxel_size * INDEX_CELL_FACTOR;
        let all = HashGrid::new(points.iter().map(|p| p.position).collect(), cell);
        let by_class = VOTE_ORDER
            .iter()
            .map(|&label| {
                let ids: Vec<usize> = (0..points.len()).filter(|&i| points[i].label == label).collect();
                let grid = HashGrid::new(ids.iter().map(|&i| points[i].position).collect(), cell);
                (label, grid, ids)
            })
            .collect();
        Ok(Self {
            voxel_size,
            frame_count,
            keys,
            points,
            all,
            by_class,
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Representatives in voxel-key order.
    pub fn points(&self) -> &[MapPoint] {
        &self.points
    }

    pub fn keys(&self) -> &[VoxelKey] {
        &self.keys
    }

    pub fn count(&self, label: Label) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }

    /// Nearest representative of `label` within `radius`, as
    /// `(index into points(), squared distance)`.
    pub fn nearest_of_class(&self, q: &Vector3<f64>, label: Label, radius: f64) -> Option<(usize, f64)> {
        let (_, grid, ids) = self.by_class.iter().find(|(l, _, _)| *l == label)?;
        grid.nearest_within(q, radius).map(|(i, d2)| (ids[i], d2))
    }

    /// Indices of representatives within `radius` of `q`, ascending.
    pub fn within_radius(&self, q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        self.all.within_radius(q, radius)
    }
}

#[derive(Clone, Debug, Default)]
struct Accum {
    sums: [Vector3<f64>; 3],
    votes: [u64; 3],
}

/// Accumulates labeled frames into voxels. Each voxel keeps the class with
/// the most frequency-normalized votes and the centroid of that class's
/// points.
#[derive(Clone, Debug)]
pub struct MapBuilder {
    voxel_size: f64,
    frame_count: usize,
    cells: BTreeMap<VoxelKey, Accum>,
}

impl MapBuilder {
    pub fn new(voxel_size: f64) -> Result<Self> {
        check_voxel(voxel_size)?;
        Ok(Self {
            voxel_size,
            frame_count: 0,
            cells: BTreeMap::new(),
        })
    }

    /// Adds the drivable and curb points of a sensor-frame cloud placed at
    /// `pose`. Returns the number of points added.
    pub fn add_frame(&mut self, cloud: &LabeledCloud, pose: &PoseSE3) -> usize {
        let mut added = 0;
        for (p, label) in cloud.iter() {
            let Some(slot) = VOTE_ORDER.iter().position(|&l| l == label) else {
                continue;
            };
            if !p.is_finite() {
                continue;
            }
            let w = pose.transform_point(&p.position());
            let acc = self.cells.entry(voxel_key(&w, self.voxel_size)).or_default();
            acc.sums[slot] += w;
            acc.votes[slot] += 1;
            added += 1;
        }
        self.frame_count += 1;
        added
    }

    pub fn finish(self) -> SemanticMap {
        // Votes are normalized by class frequency so the thin curb face is
        // not outvoted by the densely sampled road next to it.
        let mut totals = [0u64; 3];
        for a in self.cells.values() {
            for (t, v) in totals.iter_mut().zip(a.votes) {
                *t += v;
            }
        }
        let weights = totals.map(|t| if t == 0 { 0.0 } else { 1.0 / t as f64 });
        let cells = self
            .cells
            .into_iter()
            .map(|(k, a)| {
                let score = |i: usize| a.votes[i] as f64 * weights[i];
                let best = (0..3).fold(0, |b, i| if score(i) > score(b) { i } else { b });
                let point = MapPoint {
                    position: a.sums[best] / a.votes[best] as f64,
                    label: VOTE_ORDER[best],
                };
                (k, point)
            })
            .collect();
        SemanticMap::from_cells(self.voxel_size, self.frame_count, cells).expect("builder cells are valid")
    }
}

/// Fuses per-frame detection clouds placed at the supplied poses.
pub fn build_map(clouds: &[LabeledCloud], poses: &[PoseSE3], voxel_size: f64) -> Result<SemanticMap> {
    if clouds.len() != poses.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames but {} poses",
            clouds.len(),
            poses.len()
        )));
    }
    let mut b = MapBuilder::new(voxel_size)?;
    let added: usize = clouds.iter().zip(poses).map(|(c, p)| b.add_frame(c, p)).sum();
    if added == 0 {
        log::warn!("no drivable or curb points in {} frame(s); map is empty", clouds.len());
    }
    Ok(b.finish())
}

/// Map representatives of the requested classes within `radius` of the
/// pose origin, expressed in the sensor frame.
pub fn query_region(map: &SemanticMap, pose: &PoseSE3, radius: f64, classes: &[Label]) -> LabeledCloud {
    let inv = pose.inverse();
    let mut out = LabeledCloud::new(0);
    for i in map.within_radius(pose.translation(), radius) {
        let mp = &map.points[i];
        if classes.contains(&mp.label) {
            let s = inv.transform_point(&mp.position);
            out.push(LidarPoint::new(s.x, s.y, s.z), mp.label);
        }
    }
    out
}
