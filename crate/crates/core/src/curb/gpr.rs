//! One-dimensional Gaussian-process regression with a squared-exponential
//! kernel and an iterative outlier filter built on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Points further than `confidence_k` predictive sigmas are dropped.
    pub confidence_k: f64,
    pub max_iterations: usize,
    pub min_points: usize,
    /// Larger inlier sets are fitted on an evenly strided subset.
    pub max_training_points: usize,
    /// Spacing of the returned boundary samples, meters.
    pub boundary_step: f64,
}

impl Default for GprParams {
    fn default() -> Self {
        Self {
            length_scale: 5.0,
            signal_variance: 1.0,
            noise_variance: 0.01,
            confidence_k: 2.0,
            max_iterations: 10,
            min_points: 5,
            max_training_points: 400,
            boundary_step: 0.5,
        }
    }
}

impl GprParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.length_scale > 0.0
            && self.signal_variance > 0.0
            && self.noise_variance > 0.0
            && self.confidence_k > 0.0
            && self.min_points >= 2
            && self.max_training_points >= 2
            && self.boundary_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid GP parameters {self:?}")))
        }
    }

    fn kernel(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.signal_variance * (-0.5 * d * d / (self.length_scale * self.length_scale)).exp()
    }
}

const JITTER: f64 = 1e-8;

/// A fitted posterior. Predictions include observation noise.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    params: GprParams,
    train_x: Vec<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
}

impl GpPosterior {
    pub fn fit(train_x: &[f64], train_y: &[f64], params: &GprParams) -> Result<Self> {
        if train_x.len() != train_y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs vs {} targets",
                train_x.len(),
                train_y.len()
            )));
        }
        if train_x.is_empty() {
            return Err(Error::DegenerateInput("no training points".into()));
        }
        if train_x.iter().chain(train_y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GP training data".into()));
        }
        if train_x.len() > 1 && train_x.iter().all(|&x| x == train_x[0]) {
            return Err(Error::IllConditioned("all training inputs coincide".into()));
        }
        let n = train_x.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            params.kernel(train_x[i], train_x[j]) + if i == j { params.noise_variance } else { 0.0 }
        });
        let chol = match k.clone().cholesky() {
            Some(c) => c,
            None => (k + DMatrix::identity(n, n) * JITTER)
                .cholesky()
                .ok_or_else(|| Error::IllConditioned("kernel matrix not positive definite".into()))?,
        };
        let alpha = chol.solve(&DVector::from_column_slice(train_y));
        Ok(Self {
            params: *params,
            train_x: train_x.to_vec(),
            chol,
            alpha,
        })
    }

    /// Predictive mean and variance at `x`.
    pub fn predict(&self, x: f64) -> (f64, f64) {
        let ks = DVector::from_iterator(self.train_x.len(), self.train_x.iter().map(|&t| self.params.kernel(t, x)));
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("cholesky factor has a nonzero diagonal");
        let var = self.params.signal_variance + self.params.noise_variance - v.norm_squared();
        (mean, var.max(f64::MIN_POSITIVE))
    }
}

/// Fits on `(train_x, train_y)` and returns `(mean, variance)` per query.
pub fn gpr_fit(train_x: &[f64], train_y: &[f64], params: &GprParams, query_x: &[f64]) -> Result<Vec<(f64, f64)>> {
    let post = GpPosterior::fit(train_x, train_y, params)?;
    Ok(query_x.iter().map(|&x| post.predict(x)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GprFilterResult {
    /// Indices into the input, ascending.
    pub inliers: Vec<usize>,
    pub iterations: usize,
    /// Posterior mean sampled along the inlier x range.
    pub boundary: Vec<[f64; 2]>,
    pub residual_rms: f64,
    /// Input was below `min_points` and passed through unfiltered.
    pub passthrough: bool,
}

fn strided(idx: &[usize], cap: usize) -> Vec<usize> {
    if idx.len() <= cap {
        return idx.to_vec();
    }
    (0..cap).map(|k| idx[k * (idx.len() - 1) / (cap - 1)]).collect()
}

/// Share of the largest band violation a point must reach to be dropped in
/// the current pass. Trimming the worst violators first keeps one gross
/// outlier from dragging the fit off its inlier neighbours.
const TRIM_FRACTION: f64 = 0.5;

/// Iteratively fits `y = f(x)` on the surviving points and drops the worst
/// of those outside the confidence band until none remain outside.
pub fn gpr_filter(points: &[[f64; 2]], params: &GprParams) -> Result<GprFilterResult> {
    params.validate()?;
    if points.len() < params.min_points {
        log::warn!(
            "{} curb candidates is below the GP minimum of {}; passing through",
            points.len(),
            params.min_points
        );
        return Ok(GprFilterResult {
            inliers: (0..points.len()).collect(),
            iterations: 0,
            boundary: Vec::new(),
            residual_rms: 0.0,
            passthrough: true,
        });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
    let mut current = order;
    let mut iterations = 0;
    let mut post;
    let mut offset;
    loop {
        iterations += 1;
        (post, offset) = fit_centered(points, &current, params)?;
        // Residual in units of the band half-width; above 1 is outside.
        let excess: Vec<f64> = current
            .iter()
            .map(|&i| {
                let (m, v) = post.predict(points[i][0]);
                (points[i][1] - offset - m).abs() / (params.confidence_k * v.sqrt())
            })
            .collect();
        let worst = excess.iter().copied().fold(0.0, f64::max);
        if worst <= 1.0 {
            break;
        }
        let cut = (worst * TRIM_FRACTION).max(1.0);
        let kept: Vec<usize> = current.iter().zip(&excess).filter(|(_, &e)| e < cut).map(|(&i, _)| i).collect();
        if kept.len() < 2 || iterations >= params.max_iterations {
            if kept.len() >= 2 {
                current = kept;
            }
            break;
        }
        current = kept;
    }
    if iterations >= params.max_iterations {
        (post, offset) = fit_centered(points, &current, params)?;
    }
    let sq: f64 = current
        .iter()
        .map(|&i| {
            let (m, _) = post.predict(points[i][0]);
            (points[i][1] - offset - m).powi(2)
        })
        .sum();
    let residual_rms = (sq / current.len() as f64).sqrt();
    let x0 = points[current[0]][0];
    let x1 = points[*current.last().unwrap()][0];
    let steps = ((x1 - x0) / params.boundary_step).floor() as usize;
    let boundary = (0..=steps)
        .map(|k| {
            let x = x0 + k as f64 * params.boundary_step;
            [x, post.predict(x).0 + offset]
        })
        .collect();
    current.sort_unstable();
    Ok(GprFilterResult {
        inliers: current,
        iterations,
        boundary,
        residual_rms,
        passthrough: false,
    })
}

fn fit_centered(points: &[[f64; 2]], idx: &[usize], params: &GprParams) -> Result<(GpPosterior, f64)> {
    let train = strided(idx, params.max_training_points);
    let offset = train.iter().map(|&i| points[i][1]).sum::<f64>() / train.len() as f64;
    let xs: Vec<f64> = train.iter().map(|&i| points[i][0]).collect();
    let ys: Vec<f64> = train.iter().map(|&i| points[i][1] - offset).collect();
    Ok((GpPosterior::fit(&xs, &ys, params)?, offset))
}
