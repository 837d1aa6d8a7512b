//! Piecewise ground-plane fitting along the driving axis.
//!
//! The cloud is cut into equal-width slabs along x. Each slab is seeded
//! from its lowest points and refined by alternating a least-squares plane
//! fit with an orthogonal-distance gate.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Label, LabeledCloud};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundParams {
    pub num_segments: usize,
    /// Number of lowest points averaged into the seed reference height.
    pub seed_count: usize,
    /// Points within this height above the seed reference become seeds.
    pub seed_height_tolerance: f64,
    /// Fraction of the very lowest points ignored as under-ground noise.
    pub noise_discard_fraction: f64,
    pub dist_threshold: f64,
    pub iterations: usize,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            num_segments: 3,
            seed_count: 20,
            seed_height_tolerance: 0.1,
            noise_discard_fraction: 0.005,
            dist_threshold: 0.15,
            iterations: 3,
        }
    }
}

impl GroundParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.num_segments >= 1
            && self.seed_count >= 3
            && self.dist_threshold > 0.0
            && self.iterations >= 1
            && self.seed_height_tolerance >= 0.0
            && (0.0..0.5).contains(&self.noise_discard_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid ground parameters {self:?}")))
        }
    }
}

/// Plane `{p : normal . p + offset = 0}` with an upward unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl PlaneModel {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

/// Total least-squares plane: the normal is the eigenvector of the point
/// covariance with the smallest eigenvalue.
pub fn fit_plane(points: &[Vector3<f64>]) -> Result<PlaneModel> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("{} points cannot define a plane", points.len())));
    }
    // Fixed accumulation order makes the fit bit-identical under permutation.
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| {
        a.x.total_cmp(&b.x)
            .then(a.y.total_cmp(&b.y))
            .then(a.z.total_cmp(&b.z))
    });
    let n = sorted.len() as f64;
    let centroid = sorted.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in &sorted {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (lo, mid, hi) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    if !(hi > 0.0) || mid <= hi * 1e-12 {
        return Err(Error::DegenerateGeometry("points are collinear or coincident".into()));
    }
    debug_assert!(lo <= mid);
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    normal.normalize_mut();
    let flip = if normal.z != 0.0 {
        normal.z < 0.0
    } else if normal.y != 0.0 {
        normal.y < 0.0
    } else {
        normal.x < 0.0
    };
    if flip {
        normal = -normal;
    }
    Ok(PlaneModel {
        normal,
        offset: -normal.dot(&centroid),
    })
}

/// Indices per x-slab. Slabs are right-open except the last, so a point on
/// an interior boundary belongs to the slab on its right.
pub fn segment_indices(cloud: &LabeledCloud, n: usize) -> Vec<Vec<usize>> {
    if cloud.is_empty() || n == 0 {
        return Vec::new();
    }
    let (min_x, max_x) = cloud
        .points()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    let width = (max_x - min_x) / n as f64;
    let mut out = vec![Vec::new(); n];
    for (i, p) in cloud.points().iter().enumerate() {
        let k = if width > 0.0 {
            (((p.x - min_x) / width).floor() as usize).min(n - 1)
        } else {
            0
        };
        out[k].push(i);
    }
    out
}

pub fn split_segments_x(cloud: &LabeledCloud, n: usize) -> Vec<LabeledCloud> {
    segment_indices(cloud, n)
        .into_iter()
        .map(|idx| {
            let mut seg = LabeledCloud::new(cloud.frame_id());
            for i in idx {
                seg.push(cloud.points()[i], cloud.labels()[i]);
            }
            seg
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GroundSegmentation {
    /// Input order preserved; labels are `Ground` or `Other`.
    pub cloud: LabeledCloud,
    /// Final plane per x-slab, `None` where the slab could not be fitted.
    pub planes: Vec<Option<PlaneModel>>,
    pub warnings: Vec<String>,
}

pub fn segment_ground(cloud: &LabeledCloud, params: &GroundParams) -> Result<LabeledCloud> {
    segment_ground_detailed(cloud, params).map(|s| s.cloud)
}

pub fn segment_ground_detailed(cloud: &LabeledCloud, params: &GroundParams) -> Result<GroundSegmentation> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(Error::Precondition("ground segmentation needs a non-empty cloud".into()));
    }
    let mut out = cloud.clone();
    out.labels_mut().fill(Label::Other);
    let mut planes = Vec::new();
    let mut warnings = Vec::new();
    let positions = cloud.positions();

    for (k, seg) in segment_indices(cloud, params.num_segments).into_iter().enumerate() {
        if seg.len() < 3 {
            if !seg.is_empty() {
                warnings.push(format!("segment {k}: {} points, left unlabeled", seg.len()));
            }
            planes.push(None);
            continue;
        }
        match fit_segment(&positions, &seg, params) {
            Ok((plane, ground)) => {
                for i in ground {
                    out.labels_mut()[i] = Label::Ground;
                }
                planes.push(Some(plane));
            }
            Err(e) => {
                warnings.push(format!("segment {k}: {e}"));
                planes.push(None);
            }
        }
    }
    for w in &warnings {
        log::warn!("frame {}: {w}", cloud.frame_id());
    }
    Ok(GroundSegmentation {
        cloud: out,
        planes,
        warnings,
    })
}

fn seed_indices(positions: &[Vector3<f64>], seg: &[usize], params: &GroundParams) -> Vec<usize> {
    let mut by_z: Vec<usize> = seg.to_vec();
    by_z.sort_by(|&a, &b| positions[a].z.total_cmp(&positions[b].z).then(a.cmp(&b)));
    let skip = ((seg.len() as f64) * params.noise_discard_fraction).floor() as usize;
    let candidates = &by_z[skip..];
    let take = params.seed_count.min(candidates.len());
    let reference = candidates[..take].iter().map(|&i| positions[i].z).sum::<f64>() / take as f64;
    let limit = reference + params.seed_height_tolerance;
    let seeds: Vec<usize> = candidates
        .iter()
        .copied()
        .take_while(|&i| positions[i].z <= limit)
        .collect();
    if seeds.len() >= take {
        seeds
    } else {
        candidates[..take].to_vec()
    }
}

fn fit_segment(positions: &[Vector3<f64>], seg: &[usize], params: &GroundParams) -> Result<(PlaneModel, Vec<usize>)> {
    let mut current = seed_indices(positions, seg, params);
    let mut plane = None;
    for _ in 0..params.iterations {
        let pts: Vec<Vector3<f64>> = current.iter().map(|&i| positions[i]).collect();
        let fitted = match fit_plane(&pts) {
            Ok(p) => p,
            // Keep the last good plane when the gated set collapses.
            Err(e) => match plane {
                Some(p) => p,
                None => return Err(e),
            },
        };
        plane = Some(fitted);
        current = seg
            .iter()
            .copied()
            .filter(|&i| fitted.signed_distance(&positions[i]).abs() <= params.dist_threshold)
            .collect();
    }
    Ok((plane.expect("iterations >= 1"), current))
}
