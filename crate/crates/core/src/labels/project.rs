use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Extrinsics, LabeledCloud};

/// Points closer to the image plane than this are culled.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
    /// Camera-frame depth, meters.
    pub source_depth: f64,
}

/// Rectified pinhole projection of a camera-frame point, or `None` when
/// it lies on or behind the camera plane.
pub fn project_camera_point(p: &Vector3<f64>, intr: &CameraIntrinsics) -> Option<PixelPoint> {
    if !(p.z > MIN_DEPTH) {
        return None;
    }
    Some(PixelPoint {
        u: intr.fu * (p.x - intr.bx) / p.z + intr.cu,
        v: intr.fv * p.y / p.z + intr.cv,
        source_depth: p.z,
    })
}

/// Projects sensor-frame points into the image, culling everything
/// behind the camera or outside `[0, width) x [0, height)`.
pub fn project_points(points: &LabeledCloud, intr: &CameraIntrinsics, extr: &Extrinsics) -> Vec<PixelPoint> {
    project_points_with_margin(points, intr, extr, 0.0)
}

/// As [`project_points`] but keeps pixels up to `margin` outside the
/// image on every side.
pub fn project_points_with_margin(
    points: &LabeledCloud,
    intr: &CameraIntrinsics,
    extr: &Extrinsics,
    margin: f64,
) -> Vec<PixelPoint> {
    let (w, h) = (intr.width as f64, intr.height as f64);
    points
        .points()
        .iter()
        .filter_map(|p| {
            let c = extr.lidar_to_camera.transform_point(&p.position());
            project_camera_point(&c, intr)
        })
        .filter(|px| px.u >= -margin && px.u < w + margin && px.v >= -margin && px.v < h + margin)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LidarPoint, PoseSE3};
    use proptest::prelude::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(700.0, 700.0, 600.0, 180.0, 0.0, 1242, 375).unwrap()
    }

    fn identity() -> Extrinsics {
        Extrinsics {
            lidar_to_camera: PoseSE3::identity(),
        }
    }

    fn cloud(pts: &[[f64; 3]]) -> LabeledCloud {
        LabeledCloud::from_points(0, pts.iter().map(|p| LidarPoint::new(p[0], p[1], p[2])).collect())
    }

    #[test]
    fn direct_evaluation() {
        let px = project_points(&cloud(&[[1.0, 0.0, 10.0]]), &intr(), &identity());
        assert_eq!(px.len(), 1);
        assert!((px[0].u - 670.0).abs() < 1e-12);
        assert!((px[0].v - 180.0).abs() < 1e-12);
        assert_eq!(px[0].source_depth, 10.0);
    }

    #[test]
    fn principal_point_and_culling() {
        let mut i = intr();
        i.bx = 0.54;
        for z in [0.5, 3.0, 80.0] {
            let px = project_camera_point(&Vector3::new(0.54, 0.0, z), &i).unwrap();
            assert!((px.u - i.cu).abs() < 1e-12 && (px.v - i.cv).abs() < 1e-12);
        }
        assert!(project_points(&cloud(&[[0.0, 0.0, -5.0]]), &intr(), &identity()).is_empty());
        assert!(project_points(&cloud(&[[100.0, 0.0, 1.0]]), &intr(), &identity()).is_empty());
        assert_eq!(project_points_with_margin(&cloud(&[[1.0, 0.0, 1.0]]), &intr(), &identity(), 800.0).len(), 1);
    }

    proptest! {
        #[test]
        fn homogeneous_scale_invariance(
            p in prop::array::uniform3(-20.0..20.0f64),
            lambda in 0.01..100.0f64,
        ) {
            // Explicit P_rect * [x y z 1] followed by homogeneous division.
            let i = CameraIntrinsics { bx: 0.3, ..intr() };
            let pm = i.p_rect();
            let z = p[2].abs() + 0.5;
            let x = [p[0] * lambda, p[1] * lambda, z * lambda, lambda];
            let y: Vec<f64> = (0..3).map(|r| (0..4).map(|c| pm[4 * r + c] * x[c]).sum()).collect();
            let direct = project_camera_point(&Vector3::new(p[0], p[1], z), &i).unwrap();
            prop_assert!((y[0] / y[2] - direct.u).abs() < 1e-9);
            prop_assert!((y[1] / y[2] - direct.v).abs() < 1e-9);
        }
    }
}
