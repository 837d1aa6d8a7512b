//! Concave hull by k-nearest-neighbour boundary walking.

use std::f64::consts::PI;

use super::project::PixelPoint;
use super::raster::point_in_polygon;
use crate::error::{Error, Result};

pub const DEFAULT_HULL_K: usize = 12;

/// Attempts beyond the initial `k` before falling back to the convex hull.
pub const MAX_K_ESCALATIONS: usize = 48;

pub fn concave_hull(pixels: &[PixelPoint], k: usize) -> Result<Vec<[f64; 2]>> {
    let pts: Vec<[f64; 2]> = pixels.iter().map(|p| [p.u, p.v]).collect();
    concave_hull_points(&pts, k)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dedup(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    pts
}

fn check_input(pts: &[[f64; 2]]) -> Result<()> {
    if pts.len() < 3 {
        return Err(Error::DegenerateInput(format!("{} distinct points, need 3", pts.len())));
    }
    let (a, b) = (pts[0], pts[pts.len() - 1]);
    let scale = pts
        .iter()
        .map(|p| (p[0] - a[0]).abs().max((p[1] - a[1]).abs()))
        .fold(0.0, f64::max);
    let tol = 1e-12 * scale * scale;
    if pts.iter().all(|&p| cross(a, b, p).abs() <= tol) {
        return Err(Error::DegenerateInput("all points collinear".into()));
    }
    Ok(())
}

/// Simple polygon containing every input point. `k` escalates on failure
/// and the convex hull is returned once escalation is exhausted.
pub fn concave_hull_points(points: &[[f64; 2]], k: usize) -> Result<Vec<[f64; 2]>> {
    let pts = dedup(points);
    check_input(&pts)?;
    if pts.len() == 3 {
        return Ok(pts);
    }
    let k0 = k.max(3);
    let k_max = (pts.len() - 1).min(k0 + MAX_K_ESCALATIONS);
    for kk in k0..=k_max {
        if let Some(poly) = walk(&pts, kk) {
            if pts.iter().all(|&p| point_in_polygon(&poly, p)) {
                return Ok(poly);
            }
        }
    }
    log::debug!("concave hull fell back to convex hull for {} points", pts.len());
    Ok(convex_hull(&pts))
}

/// Counter-clockwise angle from `from` to `to` in (0, 2*pi].
fn ccw_angle(from: [f64; 2], to: [f64; 2]) -> f64 {
    let a = (from[0] * to[1] - from[1] * to[0]).atan2(from[0] * to[0] + from[1] * to[1]);
    if a <= 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: [f64; 2], b: [f64; 2], p: [f64; 2]| {
        p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
    };
    (d1 == 0.0 && on(q1, q2, p1))
        || (d2 == 0.0 && on(q1, q2, p2))
        || (d3 == 0.0 && on(p1, p2, q1))
        || (d4 == 0.0 && on(p1, p2, q2))
}

fn walk(pts: &[[f64; 2]], k: usize) -> Option<Vec<[f64; 2]>> {
    let n = pts.len();
    let first = (0..n).min_by(|&a, &b| pts[a][1].total_cmp(&pts[b][1]).then(pts[a][0].total_cmp(&pts[b][0])))?;
    let mut used = vec![false; n];
    used[first] = true;
    let mut hull = vec![first];
    let mut current = first;
    let mut back = [-1.0, 0.0];
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    loop {
        if hull.len() == 4 {
            used[first] = false;
        }
        scratch.clear();
        let c = pts[current];
        scratch.extend(
            (0..n)
                .filter(|&i| !used[i])
                .map(|i| ((pts[i][0] - c[0]).powi(2) + (pts[i][1] - c[1]).powi(2), i)),
        );
        if scratch.is_empty() {
            return None;
        }
        let kk = k.min(scratch.len());
        if kk < scratch.len() {
            scratch.select_nth_unstable_by(kk - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            scratch.truncate(kk);
        }
        let mut cands: Vec<(f64, usize)> = scratch
            .iter()
            .map(|&(_, i)| (ccw_angle(back, [pts[i][0] - c[0], pts[i][1] - c[1]]), i))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let h = hull.len();
        let chosen = cands.iter().map(|&(_, i)| i).find(|&cand| {
            let closing = cand == first;
            // Edges (hull[j], hull[j+1]) other than the one ending at `current`
            // and, when closing, the one starting at `first`.
            let lo = usize::from(closing);
            (lo..h.saturating_sub(2)).all(|j| !segments_intersect(c, pts[cand], pts[hull[j]], pts[hull[j + 1]]))
        })?;
        if chosen == first {
            return Some(hull.iter().map(|&i| pts[i]).collect());
        }
        back = [c[0] - pts[chosen][0], c[1] - pts[chosen][1]];
        used[chosen] = true;
        hull.push(chosen);
        current = chosen;
    }
}

/// Andrew's monotone chain; counter-clockwise, no collinear vertices.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let pts = dedup(points);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn is_simple(poly: &[[f64; 2]]) -> bool {
        let n = poly.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                    return false;
                }
            }
        }
        true
    }

    /// Ray-casting containment written out separately from the library test.
    fn contained(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
        let n = poly.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let on_seg = cross(a, b, p) == 0.0
                && p[0] >= a[0].min(b[0])
                && p[0] <= a[0].max(b[0])
                && p[1] >= a[1].min(b[1])
                && p[1] <= a[1].max(b[1]);
            if on_seg {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]) {
                inside = !inside;
            }
        }
        inside
    }

    #[test]
    fn square_corners() {
        let sq = [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]];
        for k in [3, 5, 12] {
            let h = concave_hull_points(&sq, k).unwrap();
            assert_eq!(h.len(), 4);
            assert!((polygon_area(&h) - 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            concave_hull_points(&[[0.0, 0.0], [1.0, 1.0]], 12),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            concave_hull_points(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], 12),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            concave_hull_points(&[[1.0, 1.0], [1.0, 1.0], [2.0, 5.0]], 12),
            Err(Error::DegenerateInput(_))
        ));
    }

    fn c_shape() -> Vec<[f64; 2]> {
        let mut pts = Vec::new();
        for i in 0..=40 {
            for j in 0..=40 {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.5);
                if !(x > 5.0 && (5.0..=15.0).contains(&y)) {
                    pts.push([x, y]);
                }
            }
        }
        pts
    }

    #[test]
    fn c_shape_is_concave_and_contains_all() {
        let pts = c_shape();
        let hull = concave_hull_points(&pts, 5).unwrap();
        assert!(is_simple(&hull));
        assert!(pts.iter().all(|&p| contained(&hull, p)));
        assert!(polygon_area(&hull) < 0.8 * polygon_area(&convex_hull(&pts)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn random_sets_are_contained(
            pts in prop::collection::vec(prop::array::uniform2(0.0..100.0f64), 3..150),
            k in 3usize..15,
        ) {
            if let Ok(hull) = concave_hull_points(&pts, k) {
                prop_assert!(is_simple(&hull));
                for &p in &pts {
                    prop_assert!(contained(&hull, p));
                }
            }
        }
    }
}
