//! Shared inputs for the stage benchmarks: a synthetic sequence, its raw
//! scans, per-frame detections and the semantic map built from them.

use madl::curb::{detect_curbs, CurbParams, GprParams};
use madl::geometry::{LabeledCloud, LidarGeometry, PoseSE3};
use madl::ground::GroundParams;
use madl::mapping::{build_map, SemanticMap};
use madl::synth::{generate_scene, simulate_scan, GroundTruth, SceneSpec};

pub struct Fixture {
    pub geom: LidarGeometry,
    pub truth: GroundTruth,
    /// Raw scans without class labels, one per frame.
    pub scans: Vec<LabeledCloud>,
    /// Mappable detection points per frame.
    pub detections: Vec<LabeledCloud>,
    pub map: SemanticMap,
}

impl Fixture {
    pub fn new(frames: usize) -> Self {
        let geom = LidarGeometry::kitti_like();
        let spec = SceneSpec {
            frame_count: frames,
            ..SceneSpec::default()
        };
        let truth = generate_scene(&spec, &geom).expect("default scene is valid");
        let scans: Vec<LabeledCloud> = truth
            .poses
            .iter()
            .map(|pose| {
                let s = simulate_scan(&truth, pose, &geom);
                LabeledCloud::from_points(s.frame_id(), s.points().to_vec())
            })
            .collect();
        let detections: Vec<LabeledCloud> = scans.iter().map(|s| detect(s, &geom).filter(|_, l| l.is_mappable())).collect();
        let map = build_map(&detections, &truth.poses, 0.2).expect("detections are non-empty");
        Self {
            geom,
            truth,
            scans,
            detections,
            map,
        }
    }

    pub fn pose(&self, frame: usize) -> &PoseSE3 {
        &self.truth.poses[frame]
    }
}

/// Curb detection on one raw scan with default parameters, as a labeled cloud.
pub fn detect(scan: &LabeledCloud, geom: &LidarGeometry) -> LabeledCloud {
    let det = detect_curbs(scan, geom, &GroundParams::default(), &CurbParams::default(), &GprParams::default())
        .expect("synthetic scans are detectable");
    det.labeled_cloud(scan.points()).expect("labels match the scan")
}
