use madl::curb::{detect_curbs, CurbParams, GprParams};
use madl::eval::{confusion_counts, mask_metrics};
use madl::geometry::{CameraIntrinsics, Extrinsics, Label, LabeledCloud, LidarGeometry};
use madl::ground::GroundParams;
use madl::labels::{generate_frame_labels, mask_from_drivable, FrameLabels, ProjectionParams};
use madl::mapping::{build_map, query_region, SemanticMap};
use madl::synth::{generate_scene, simulate_camera_truth, simulate_scan, GroundTruth, SceneSpec};

fn detection_clouds(g: &GroundTruth) -> Vec<LabeledCloud> {
    let geom = LidarGeometry::kitti_like();
    (0..g.poses.len())
        .map(|k| {
            let scan = simulate_scan(g, &g.poses[k], &geom);
            let raw = LabeledCloud::from_points(k as u32, scan.points().to_vec());
            let det =
                detect_curbs(&raw, &geom, &GroundParams::default(), &CurbParams::default(), &GprParams::default()).unwrap();
            det.labeled_cloud(raw.points()).unwrap()
        })
        .collect()
}

fn sequence() -> (GroundTruth, Vec<LabeledCloud>, SemanticMap) {
    let g = generate_scene(&SceneSpec::default(), &LidarGeometry::kitti_like()).unwrap();
    let clouds = detection_clouds(&g);
    let map = build_map(&clouds, &g.poses, 0.2).unwrap();
    (g, clouds, map)
}

#[test]
fn map_masks_match_truth_and_beat_single_frame() {
    let (g, clouds, map) = sequence();
    let (intr, extr) = (CameraIntrinsics::kitti_like(), Extrinsics::kitti_like());
    let params = ProjectionParams::default();
    for k in [5usize, 15, 25, 30, 35, 40] {
        let t = std::time::Instant::now();
        let out = generate_frame_labels(k as u32, &g.poses[k], &map, &intr, &extr, &params).unwrap();
        let FrameLabels::Labeled(art) = out else { panic!("frame {k} skipped") };
        let truth = simulate_camera_truth(&g, &g.poses[k], &intr, &extr);
        let m = mask_metrics(&confusion_counts(&art.mask, &truth.mask).unwrap()).unwrap();
        let single = clouds[k].with_label(Label::Drivable);
        let (smask, _, _) = mask_from_drivable(&single, &intr, &extr, &params).unwrap();
        let s = mask_metrics(&confusion_counts(&smask, &truth.mask).unwrap()).unwrap();
        eprintln!(
            "frame {k}: map iou {:.4} f1 {:.4} single iou {:.4} ({} px, hull {} verts, {:?})",
            m.iou,
            m.f1,
            s.iou,
            art.projected_points,
            art.polygon.len(),
            t.elapsed()
        );
        assert!(m.iou >= 0.85);
        assert!(m.iou >= s.iou);
        assert_eq!(
            art.curbs.len(),
            query_region(&map, &g.poses[k], params.query_radius, &[Label::CurbLeft, Label::CurbRight]).len()
        );
    }
}

/// Road ahead of a frame on which its curb detections overlap those of the
/// neighbouring frames, meters.
const CURB_NEAR: f64 = 3.0;
const CURB_REACH: f64 = 15.0;

#[test]
fn map_curb_labels_match_truth_curbs() {
    let (g, _, map) = sequence();
    let (intr, extr) = (CameraIntrinsics::kitti_like(), Extrinsics::kitti_like());
    let params = ProjectionParams::default();
    let stations = g.observed_stations(CURB_NEAR, CURB_REACH);
    for k in [0usize, 10, 25, 40, 49] {
        let FrameLabels::Labeled(art) = generate_frame_labels(k as u32, &g.poses[k], &map, &intr, &extr, &params).unwrap()
        else {
            panic!("frame {k} skipped")
        };
        let truth = g.curbs_in_region(&g.poses[k], params.query_radius, stations);
        let r = madl::eval::curb_metrics(&art.curbs.positions(), &truth.positions(), 0.2).unwrap();
        eprintln!("frame {k}: curb p {:.4} r {:.4} f1 {:.4} ({} pred, {} truth)", r.precision, r.recall, r.f1, r.predicted, r.truth);
        assert!(r.f1 >= 0.9);
    }
}
