//! Scan-to-map localization by weighted point-to-point least squares.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::map::SemanticMap;
use crate::error::{Error, Result};
use crate::geometry::{Label, LabeledCloud, PoseSE3};

/// Step halvings tried before an update is rejected.
const MAX_BACKTRACKS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Constant,
    /// Huber weighting with threshold `delta`, meters.
    Huber(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Correspondence gate, meters.
    pub max_correspondence_dist: f64,
    pub max_iterations: usize,
    pub translation_eps: f64,
    pub rotation_eps: f64,
    pub weight_scheme: WeightScheme,
    /// Scale point weights so every class present in the scan carries the
    /// same total weight.
    pub class_balance: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            max_correspondence_dist: 2.0,
            max_iterations: 60,
            translation_eps: 1e-5,
            rotation_eps: 1e-6,
            weight_scheme: WeightScheme::Constant,
            class_balance: true,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let huber_ok = match self.weight_scheme {
            WeightScheme::Constant => true,
            WeightScheme::Huber(d) => ok(d),
        };
        if ok(self.max_correspondence_dist)
            && self.max_iterations > 0
            && ok(self.translation_eps)
            && ok(self.rotation_eps)
            && huber_ok
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("registration config out of range: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub pose: PoseSE3,
    /// RMS distance over gated correspondences at the final pose, meters.
    pub rms_residual: f64,
    pub iterations_used: usize,
    pub converged: bool,
    pub inlier_fraction: f64,
    /// Mean truncated robust cost at the initial pose and after every
    /// accepted update. Non-increasing by construction.
    pub cost_history: Vec<f64>,
}

struct ScanPoint {
    position: Vector3<f64>,
    label: Label,
    /// Class weight.
    weight: f64,
}

struct Evaluation {
    cost: f64,
    /// `(scan index, map point)` pairs inside the gate.
    pairs: Vec<(usize, Vector3<f64>)>,
    sq_sum: f64,
}

/// Truncated robust cost of one residual distance.
fn rho(d: f64, gate: f64, scheme: WeightScheme) -> f64 {
    let d = d.min(gate);
    match scheme {
        WeightScheme::Constant => d * d,
        WeightScheme::Huber(delta) if d <= delta => d * d,
        WeightScheme::Huber(delta) => 2.0 * delta * d - delta * delta,
    }
}

fn weight(d: f64, scheme: WeightScheme) -> f64 {
    match scheme {
        WeightScheme::Huber(delta) if d > delta => delta / d,
        _ => 1.0,
    }
}

fn evaluate(scan: &[ScanPoint], map: &SemanticMap, pose: &PoseSE3, cfg: &RegistrationConfig) -> Evaluation {
    let gate = cfg.max_correspondence_dist;
    let hits: Vec<Option<(usize, Vector3<f64>, f64)>> = scan
        .par_iter()
        .enumerate()
        .map(|(i, sp)| {
            let w = pose.transform_point(&sp.position);
            map.nearest_of_class(&w, sp.label, gate)
                .map(|(j, d2)| (i, map.points()[j].position, d2))
        })
        .collect();
    let mut cost = 0.0;
    let mut sq_sum = 0.0;
    let mut pairs = Vec::with_capacity(hits.len());
    for (h, sp) in hits.into_iter().zip(scan) {
        match h {
            Some((i, q, d2)) => {
                cost += sp.weight * rho(d2.sqrt(), gate, cfg.weight_scheme);
                sq_sum += d2;
                pairs.push((i, q));
            }
            None => cost += sp.weight * rho(gate, gate, cfg.weight_scheme),
        }
    }
    let total: f64 = scan.iter().map(|sp| sp.weight).sum();
    Evaluation {
        cost: cost / total.max(f64::MIN_POSITIVE),
        pairs,
        sq_sum,
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Gauss-Newton step `(omega, v)` from the small-angle linearization
/// `R p + t ≈ p' + omega x p' + v` around the current transformed points.
fn gauss_newton_step(
    scan: &[ScanPoint],
    eval: &Evaluation,
    pose: &PoseSE3,
    scheme: WeightScheme,
) -> Option<Vector6<f64>> {
    let mut h = Matrix6::<f64>::zeros();
    let mut b = Vector6::<f64>::zeros();
    for &(i, q) in &eval.pairs {
        let p = pose.transform_point(&scan[i].position);
        let r = p - q;
        let w = scan[i].weight * weight(r.norm(), scheme);
        let mut j = nalgebra::Matrix3x6::<f64>::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&p)));
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        h += w * j.transpose() * j;
        b += w * j.transpose() * r;
    }
    let damping = 1e-9 * h.trace().max(1e-12);
    let hd = h + Matrix6::identity() * damping;
    hd.cholesky().map(|c| -c.solve(&b))
}

fn apply(step: &Vector6<f64>, pose: &PoseSE3) -> PoseSE3 {
    let omega = Vector3::new(step[0], step[1], step[2]);
    let v = Vector3::new(step[3], step[4], step[5]);
    PoseSE3::from_rotation_vector(omega, v).compose(pose)
}

fn weighted_points(scan: &LabeledCloud, balance: bool) -> Vec<ScanPoint> {
    let mut pts: Vec<ScanPoint> = scan
        .iter()
        .filter(|(p, l)| l.is_mappable() && p.is_finite())
        .map(|(p, label)| ScanPoint {
            position: p.position(),
            label,
            weight: 1.0,
        })
        .collect();
    if balance {
        let mut counts = [0usize; 5];
        for sp in &pts {
            counts[sp.label.id() as usize] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count() as f64;
        for sp in &mut pts {
            sp.weight = class_share(counts[sp.label.id() as usize], present);
        }
    }
    pts
}

/// Weight giving a class of `count` points a `1 / present` share.
fn class_share(count: usize, present: f64) -> f64 {
    1.0 / (count as f64 * present)
}

/// Refines `initial` (sensor to map) so that the scan's drivable and curb
/// points match same-class map representatives, minimizing the weighted
/// sum of squared point-to-point residuals. Points of other classes are
/// ignored.
pub fn register_scan(
    scan: &LabeledCloud,
    map: &SemanticMap,
    initial: &PoseSE3,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    if map.is_empty() {
        return Err(Error::Precondition("registration against an empty map".into()));
    }
    let pts = weighted_points(scan, cfg.class_balance);
    let mut pose = *initial;
    let mut eval = evaluate(&pts, map, &pose, cfg);
    if eval.pairs.is_empty() {
        return Err(Error::NoOverlap { iteration: 0 });
    }
    let mut history = vec![eval.cost];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let step = gauss_newton_step(&pts, &eval, &pose, cfg.weight_scheme)
            .ok_or(Error::Divergence { iteration: iterations })?;
        if !step.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iteration: iterations });
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let candidate = apply(&(step * alpha), &pose);
            let e = evaluate(&pts, map, &candidate, cfg);
            if !e.pairs.is_empty() && e.cost <= eval.cost {
                accepted = Some((candidate, e));
                break;
            }
            alpha *= 0.5;
        }
        let small = |s: &Vector6<f64>| {
            Vector3::new(s[0], s[1], s[2]).norm() < cfg.rotation_eps
                && Vector3::new(s[3], s[4], s[5]).norm() < cfg.translation_eps
        };
        match accepted {
            Some((candidate, e)) => {
                pose = candidate;
                eval = e;
                history.push(eval.cost);
                if small(&(step * alpha)) {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = small(&step);
                break;
            }
        }
    }
    let n = eval.pairs.len();
    Ok(RegistrationResult {
        pose,
        rms_residual: (eval.sq_sum / n as f64).sqrt(),
        iterations_used: iterations,
        converged,
        inlier_fraction: n as f64 / pts.len() as f64,
        cost_history: history,
    })
}
