use madl::curb::{
    classify_left_right, detect_curbs, extract_candidates, gpr_filter, split_into_rings, CurbDetection, CurbParams,
    GprParams, RoadDirection,
};
use madl::geometry::{Label, LabeledCloud, LidarGeometry, PoseSE3};
use madl::ground::{segment_ground, GroundParams};
use madl::synth::{generate_scene, simulate_scan, GroundTruth, SceneSpec};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn raw(scan: &LabeledCloud) -> LabeledCloud {
    LabeledCloud::from_points(scan.frame_id(), scan.points().to_vec())
}

fn straight(curb_height: f64) -> SceneSpec {
    SceneSpec {
        curvature: 0.0,
        straight_length: 160.0,
        curb_height,
        ..SceneSpec::default()
    }
}

fn detect(g: &GroundTruth, frame: usize) -> CurbDetection {
    let geom = LidarGeometry::kitti_like();
    let scan = raw(&simulate_scan(g, &g.poses[frame], &geom));
    detect_curbs(&scan, &geom, &GroundParams::default(), &CurbParams::default(), &GprParams::default()).unwrap()
}

/// RMS of lateral boundary error against the analytic curb offset.
fn boundary_rms(spec: &SceneSpec, pose: &PoseSE3, samples: &[[f64; 2]], side: f64) -> f64 {
    assert!(!samples.is_empty());
    let sq: f64 = samples
        .iter()
        .map(|p| {
            let w = pose.transform_point(&Vector3::new(p[0], p[1], 0.0));
            let (_, d) = spec.road_coords(w.x, w.y);
            (d - side * 0.5 * spec.road_width).powi(2)
        })
        .sum();
    (sq / samples.len() as f64).sqrt()
}

#[test]
fn straight_road_boundaries() {
    let spec = straight(0.15);
    let g = generate_scene(&spec, &LidarGeometry::kitti_like()).unwrap();
    let det = detect(&g, 10);
    assert!(!det.low_confidence);
    assert!(det.road_direction.angle.abs() < 0.02);
    assert!(boundary_rms(&spec, &g.poses[10], &det.boundary_left, 1.0) <= 0.1);
    assert!(boundary_rms(&spec, &g.poses[10], &det.boundary_right, -1.0) <= 0.1);
    assert!(det.residual_rms >= 0.0);
}

#[test]
fn curved_road_boundaries() {
    let spec = SceneSpec {
        curvature: 1.0 / 50.0,
        straight_length: 10.0,
        length: 150.0,
        ..SceneSpec::default()
    };
    let g = generate_scene(&spec, &LidarGeometry::kitti_like()).unwrap();
    for frame in [20, 45] {
        let det = detect(&g, frame);
        assert!(boundary_rms(&spec, &g.poses[frame], &det.boundary_left, 1.0) <= 0.15);
        assert!(boundary_rms(&spec, &g.poses[frame], &det.boundary_right, -1.0) <= 0.15);
    }
}

#[test]
fn sides_respect_segmentation_line() {
    let g = generate_scene(&SceneSpec::default(), &LidarGeometry::kitti_like()).unwrap();
    let det = detect(&g, 30);
    let (s, c) = det.road_direction.angle.sin_cos();
    assert!(det.left.iter().all(|p| c * p[1] - s * p[0] > 0.0));
    assert!(det.right.iter().all(|p| c * p[1] - s * p[0] <= 0.0));
    assert_eq!(det.labels.iter().filter(|l| **l == Label::CurbLeft).count(), det.left.len());
    assert_eq!(det.labels.iter().filter(|l| **l == Label::CurbRight).count(), det.right.len());
}

#[test]
fn open_field_is_low_confidence() {
    let spec = SceneSpec {
        road_width: 1000.0,
        ..straight(0.15)
    };
    let g = generate_scene(&spec, &LidarGeometry::kitti_like()).unwrap();
    let det = detect(&g, 5);
    assert!(det.left.is_empty() && det.right.is_empty());
    assert!(det.low_confidence);
    assert!(det.road_direction.low_confidence);
}

fn candidates_for(spec: &SceneSpec, frame: usize) -> (Vec<Vector3<f64>>, PoseSE3) {
    let geom = LidarGeometry::kitti_like();
    let g = generate_scene(spec, &geom).unwrap();
    let pose = g.poses[frame];
    let scan = raw(&simulate_scan(&g, &pose, &geom));
    let cropped = scan.filter(|p, _| p.x > 0.0 && p.x <= 30.0);
    let seg = segment_ground(&cropped, &GroundParams::default()).unwrap();
    let cp = CurbParams::default();
    let idx = extract_candidates(&seg, &cp.thresholds(), &geom, &cp.window());
    (idx.iter().map(|&i| seg.points()[i].position()).collect(), pose)
}

#[test]
fn candidates_lie_on_curb_lines() {
    let spec = straight(0.15);
    let (cands, pose) = candidates_for(&spec, 8);
    assert!(cands.len() > 50);
    let near = cands
        .iter()
        .filter(|p| {
            let w = pose.transform_point(p);
            let lateral = (w.y.abs() - 4.0).abs();
            (lateral * lateral + (w.z - 0.075).powi(2)).sqrt() <= 0.2
        })
        .count();
    assert!(near as f64 >= 0.9 * cands.len() as f64, "{near} of {}", cands.len());
}

#[test]
fn low_curb_yields_no_candidates() {
    let spec = SceneSpec {
        wall_height: 0.0,
        ..straight(0.02)
    };
    let (cands, _) = candidates_for(&spec, 8);
    assert!(cands.is_empty(), "{}", cands.len());
}

#[test]
fn sixteen_ring_scan_splits_into_sixteen_rings() {
    let geom = LidarGeometry::uniform(1.73, 0.2, -15.0, 1.0, 16);
    let g = generate_scene(&SceneSpec::default(), &geom).unwrap();
    let scan = simulate_scan(&g, &g.poses[3], &geom);
    let rings = split_into_rings(&scan);
    assert_eq!(rings.len(), 16);
    assert_eq!(rings.iter().map(|r| r.indices.len()).sum::<usize>(), scan.len());
    for r in &rings {
        let az: Vec<f64> = r.indices.iter().map(|&i| scan.points()[i].azimuth()).collect();
        assert!(az.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn classification_examples() {
    let along_x = RoadDirection {
        angle: 0.0,
        low_confidence: false,
    };
    let (l, r) = classify_left_right(&[Vector3::new(5.0, 3.0, 0.0), Vector3::new(7.0, 0.0, 0.0)], &along_x);
    assert_eq!((l, r), (vec![0], vec![1]));

    // Reflecting across the line swaps the sides exactly (off-line points).
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dir = RoadDirection {
        angle: 0.4,
        low_confidence: false,
    };
    let (s, c) = dir.angle.sin_cos();
    let pts: Vec<Vector3<f64>> = (0..200)
        .map(|_| Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), 0.0))
        .collect();
    let mirrored: Vec<Vector3<f64>> = pts
        .iter()
        .map(|p| {
            let along = p.x * c + p.y * s;
            let foot = Vector3::new(along * c, along * s, 0.0);
            foot * 2.0 - p
        })
        .collect();
    let (l1, r1) = classify_left_right(&pts, &dir);
    let (l2, r2) = classify_left_right(&mirrored, &dir);
    assert_eq!(l1, r2);
    assert_eq!(r1, l2);
}

#[test]
fn gp_filter_removes_single_outlier() {
    let mut pts: Vec<[f64; 2]> = (0..20)
        .map(|i| {
            let x = i as f64;
            [x, 4.0 + 0.002 * x * x]
        })
        .collect();
    pts.push([9.5, 4.0 + 0.002 * 90.25 + 1.0]);
    let r = gpr_filter(&pts, &GprParams::default()).unwrap();
    assert_eq!(r.inliers, (0..20).collect::<Vec<_>>());

    let clean = gpr_filter(&pts[..20], &GprParams::default()).unwrap();
    assert_eq!(clean.inliers.len(), 20);
    assert_eq!(clean.iterations, 1);

    let few = gpr_filter(&pts[..3], &GprParams::default()).unwrap();
    assert!(few.passthrough);
    assert_eq!(few.inliers, vec![0, 1, 2]);
}

#[test]
fn detection_serializes_to_json() {
    let g = generate_scene(&straight(0.15), &LidarGeometry::kitti_like()).unwrap();
    let det = detect(&g, 2);
    let json = serde_json::to_value(&det).unwrap();
    for key in ["frame_id", "left", "right", "residual_rms", "road_direction"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert!(json.get("labels").is_none());
    let back: CurbDetection = serde_json::from_value(json).unwrap();
    // Per-point labels travel in their own file.
    assert_eq!(back, CurbDetection { labels: Vec::new(), ..det });
}
