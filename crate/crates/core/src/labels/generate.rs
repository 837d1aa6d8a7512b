use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::hull::{concave_hull, DEFAULT_HULL_K};
use super::project::project_points_with_margin;
use super::raster::{rasterize_mask, LabelMask};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Extrinsics, Label, LabeledCloud, PoseSE3};
use crate::mapping::{query_region, SemanticMap};
use crate::spatial::HashGrid;

/// Class id written for curb points in per-scan label files.
pub const CURB_CLASS_ID: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionParams {
    /// Radius of the map region retrieved around the frame, meters.
    pub query_radius: f64,
    pub hull_k: usize,
    /// Projected points up to this many pixels outside the image still
    /// shape the hull, so the mask reaches the image border.
    pub pixel_margin: f64,
    /// Scan points within this distance of a retrieved curb point are
    /// labeled curb, meters.
    pub curb_tolerance: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            query_radius: 60.0,
            hull_k: DEFAULT_HULL_K,
            pixel_margin: 150.0,
            curb_tolerance: 0.2,
        }
    }
}

impl ProjectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.query_radius > 0.0 && self.pixel_margin >= 0.0 && self.curb_tolerance > 0.0 && self.hull_k >= 3) {
            return Err(Error::InvalidArgument(format!("projection parameters out of range: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelArtifacts {
    pub frame_id: u32,
    pub mask: LabelMask,
    /// Concave hull in pixel coordinates.
    pub polygon: Vec<[f64; 2]>,
    pub projected_points: usize,
    /// Retrieved curb points in the sensor frame.
    pub curbs: LabeledCloud,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub frame_id: u32,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FrameLabels {
    Labeled(LabelArtifacts),
    Skipped(SkipRecord),
}

/// Projects sensor-frame road points, takes their concave hull and
/// rasterizes it at the calibration's image size. `Err` carries the skip
/// reason.
pub fn mask_from_drivable(
    drivable: &LabeledCloud,
    intr: &CameraIntrinsics,
    extr: &Extrinsics,
    params: &ProjectionParams,
) -> std::result::Result<(LabelMask, Vec<[f64; 2]>, usize), String> {
    let pixels = project_points_with_margin(drivable, intr, extr, params.pixel_margin);
    if pixels.len() < 3 {
        return Err(format!("{} projected drivable pixels, need 3", pixels.len()));
    }
    let polygon = concave_hull(&pixels, params.hull_k).map_err(|e| e.to_string())?;
    let mask = rasterize_mask(&polygon, intr.width, intr.height);
    Ok((mask, polygon, pixels.len()))
}

/// Map-based labels for one localized frame: a drivable mask in the
/// camera image and the curb points around the frame in 3D. The mask is
/// the hull of the drivable and curb points in the region.
pub fn generate_frame_labels(
    frame_id: u32,
    pose: &PoseSE3,
    map: &SemanticMap,
    intr: &CameraIntrinsics,
    extr: &Extrinsics,
    params: &ProjectionParams,
) -> Result<FrameLabels> {
    params.validate()?;
    // Curb points mark the edge of the drivable area, so they shape the
    // hull together with the drivable points.
    let region = query_region(map, pose, params.query_radius, &[Label::Drivable, Label::CurbLeft, Label::CurbRight]);
    let mut curbs = region.filter(|_, l| l.is_curb());
    curbs.set_frame_id(frame_id);
    Ok(match mask_from_drivable(&region, intr, extr, params) {
        Ok((mask, polygon, projected_points)) => FrameLabels::Labeled(LabelArtifacts {
            frame_id,
            mask,
            polygon,
            projected_points,
            curbs,
        }),
        Err(reason) => FrameLabels::Skipped(SkipRecord { frame_id, reason }),
    })
}

/// Output paths of one labeled frame below a label directory.
pub struct LabelPaths {
    pub mask: PathBuf,
    pub curbs: PathBuf,
}

impl LabelPaths {
    pub const MASKS: &'static str = "masks";
    pub const CURBS: &'static str = "curbs";
    pub const CURB_LABELS: &'static str = "curb_labels";
    pub const SKIPPED: &'static str = "skipped.jsonl";

    pub fn new(dir: &Path, frame_id: u32) -> Self {
        Self {
            mask: dir.join(Self::MASKS).join(format!("{frame_id:06}.png")),
            curbs: dir.join(Self::CURBS).join(format!("{frame_id:06}.bin")),
        }
    }

    pub fn curb_labels(dir: &Path, frame_id: u32) -> PathBuf {
        dir.join(Self::CURB_LABELS).join(format!("{frame_id:06}.label"))
    }
}

/// Writes the mask PNG and the curb point file of a labeled frame.
pub fn write_frame_labels(art: &LabelArtifacts, dir: &Path) -> Result<LabelPaths> {
    let paths = LabelPaths::new(dir, art.frame_id);
    art.mask.save_png(&paths.mask)?;
    crate::io::write_point_set(&paths.curbs, &art.curbs)?;
    Ok(paths)
}

/// One class id per scan point: [`CURB_CLASS_ID`] when a curb point lies
/// within `tolerance`, else 0.
pub fn curb_label_ids(scan: &LabeledCloud, curbs: &[Vector3<f64>], tolerance: f64) -> Vec<u32> {
    if curbs.is_empty() {
        return vec![0; scan.len()];
    }
    let grid = HashGrid::new(curbs.to_vec(), tolerance.max(0.05));
    scan.points()
        .iter()
        .map(|p| {
            let hit = p.is_finite() && grid.nearest_within(&p.position(), tolerance).is_some();
            if hit {
                CURB_CLASS_ID
            } else {
                0
            }
        })
        .collect()
}

/// Writes the per-point curb label file for `scan` and returns the ids.
pub fn export_curb_labels(scan: &LabeledCloud, curbs: &[Vector3<f64>], tolerance: f64, path: &Path) -> Result<Vec<u32>> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    let ids = curb_label_ids(scan, curbs, tolerance);
    crate::io::write_label_file(path, &ids)?;
    Ok(ids)
}
