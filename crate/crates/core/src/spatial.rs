//! Uniform hash grid for radius-bounded nearest-neighbour queries.

use std::collections::HashMap;

use nalgebra::Vector3;

type CellKey = [i64; 3];

#[derive(Clone, Debug)]
pub struct HashGrid {
    cell: f64,
    points: Vec<Vector3<f64>>,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl HashGrid {
    /// `cell` must be positive and finite.
    pub fn new(points: Vec<Vector3<f64>>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key_of(p, cell)).or_default().push(i as u32);
        }
        Self { cell, points, cells }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// Closest point within `radius`, as `(index, squared distance)`. Ties
    /// go to the lower index.
    pub fn nearest_within(&self, q: &Vector3<f64>, radius: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() || !(radius >= 0.0) {
            return None;
        }
        let center = key_of(q, self.cell);
        let max_shell = (radius / self.cell).ceil() as i64 + 1;
        let r2 = radius * radius;
        let mut best: Option<(usize, f64)> = None;
        for s in 0..=max_shell {
            for_shell(center, s, |k| {
                if let Some(ids) = self.cells.get(&k) {
                    for &i in ids {
                        let d2 = (self.points[i as usize] - q).norm_squared();
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d2 < bd || (d2 == bd && (i as usize) < bi),
                        };
                        if d2 <= r2 && better {
                            best = Some((i as usize, d2));
                        }
                    }
                }
            });
            // Every point outside shells 0..=s is farther than s * cell.
            if let Some((_, bd)) = best {
                let reach = s as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
        }
        best
    }

    /// Indices of all points within `radius`, ascending.
    pub fn within_radius(&self, q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        if !(radius >= 0.0) {
            return Vec::new();
        }
        let r2 = radius * radius;
        let span = (radius / self.cell).ceil();
        let mut out: Vec<usize> = if !span.is_finite() || span.powi(3) > self.cells.len() as f64 {
            (0..self.points.len())
                .filter(|&i| (self.points[i] - q).norm_squared() <= r2)
                .collect()
        } else {
            let span = span as i64;
            let c = key_of(q, self.cell);
            let mut v = Vec::new();
            for dx in -span..=span {
                for dy in -span..=span {
                    for dz in -span..=span {
                        if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            v.extend(
                                ids.iter()
                                    .map(|&i| i as usize)
                                    .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
                            );
                        }
                    }
                }
            }
            v
        };
        out.sort_unstable();
        out
    }
}

fn key_of(p: &Vector3<f64>, cell: f64) -> CellKey {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

/// Visits every cell at Chebyshev distance exactly `s` from `c`.
fn for_shell(c: CellKey, s: i64, mut f: impl FnMut(CellKey)) {
    if s == 0 {
        f(c);
        return;
    }
    for dx in -s..=s {
        for dy in -s..=s {
            if dx.abs() == s || dy.abs() == s {
                for dz in -s..=s {
                    f([c[0] + dx, c[1] + dy, c[2] + dz]);
                }
            } else {
                f([c[0] + dx, c[1] + dy, c[2] - s]);
                f([c[0] + dx, c[1] + dy, c[2] + s]);
            }
        }
    }
}
