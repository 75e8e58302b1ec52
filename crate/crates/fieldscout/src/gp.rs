//! Scalar Gaussian-process regression with a squared-exponential kernel.
//!
//! Hand-rolled on purpose: the posterior and the log marginal likelihood are
//! the numerical heart of the planner, and both are checked against dense
//! linear-algebra oracles in the test suite. Inputs are 1-D; the kernel
//! matrix is factorized once per fit and reused for every prediction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("training inputs and targets differ in length ({x} vs {y})")]
    ShapeMismatch { x: usize, y: usize },
    #[error("empty training set")]
    Empty,
    #[error("non-finite training value")]
    NonFinite,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(&'static str),
    #[error("kernel matrix is not positive definite even at maximum jitter")]
    SingularKernel,
    #[error("hyperparameter search space has an empty axis")]
    EmptySearchSpace,
}

/// Squared-exponential kernel parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Default for Hyperparams {
    fn default() -> Hyperparams {
        Hyperparams { length_scale: 0.01, signal_variance: 1.0, noise_variance: 0.2 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(GpError::InvalidHyper("length_scale must be positive"));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(GpError::InvalidHyper("signal_variance must be positive"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(GpError::InvalidHyper("noise_variance must be non-negative"));
        }
        Ok(())
    }
}

/// Squared-exponential covariance between two inputs.
///
/// The noise variance is not part of this value: it enters only the diagonal
/// of the training matrix (by index, so duplicated inputs still count as
/// distinct training points).
pub fn kernel(x_i: f64, x_j: f64, hyper: &Hyperparams) -> f64 {
    let d = (x_i - x_j) / hyper.length_scale;
    hyper.signal_variance * (-0.5 * d * d).exp()
}

/// Grid for [`optimize_hyperparams`]. Axes are searched in ascending order;
/// among equal log-marginal-likelihood maxima the smallest length scale wins,
/// then the smallest signal variance, then the smallest noise variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub length_scales: Vec<f64>,
    pub signal_variances: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

impl Default for SearchSpace {
    /// 13 log-spaced length scales spanning [1e-6, 1e1], a coarse grid for
    /// the variances.
    fn default() -> SearchSpace {
        let length_scales =
            (0..13).map(|k| 10f64.powf(-6.0 + 7.0 * k as f64 / 12.0)).collect();
        SearchSpace {
            length_scales,
            signal_variances: vec![0.25, 1.0, 4.0],
            noise_variances: vec![0.01, 0.05, 0.2],
        }
    }
}

/// Diagonal jitter ladder tried when the factorization fails: none, then
/// 1e-10 escalating tenfold to 1e-4.
const JITTERS: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Fitted GP posterior over scalar inputs.
///
/// Serializes as its training data and hyperparameters; the factorization is
/// rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GpModelRepr", into = "GpModelRepr")]
pub struct GpModel {
    x: Vec<f64>,
    y: Vec<f64>,
    hyper: Hyperparams,
    /// Lower-triangular factor of K(X,X) + (σ_n² + jitter)·I, row-major n×n.
    chol: Vec<f64>,
    /// Cached solve of K_XX⁻¹ y.
    alpha: Vec<f64>,
    jitter: f64,
}

impl PartialEq for GpModel {
    fn eq(&self, other: &GpModel) -> bool {
        self.x == other.x && self.y == other.y && self.hyper == other.hyper
    }
}

#[derive(Serialize, Deserialize)]
struct GpModelRepr {
    x: Vec<f64>,
    y: Vec<f64>,
    hyper: Hyperparams,
}

impl TryFrom<GpModelRepr> for GpModel {
    type Error = GpError;

    fn try_from(repr: GpModelRepr) -> Result<GpModel, GpError> {
        GpModel::fit(&repr.x, &repr.y, repr.hyper)
    }
}

impl From<GpModel> for GpModelRepr {
    fn from(model: GpModel) -> GpModelRepr {
        GpModelRepr { x: model.x, y: model.y, hyper: model.hyper }
    }
}

impl GpModel {
    pub fn fit(x: &[f64], y: &[f64], hyper: Hyperparams) -> Result<GpModel, GpError> {
        hyper.validate()?;
        if x.len() != y.len() {
            return Err(GpError::ShapeMismatch { x: x.len(), y: y.len() });
        }
        if x.is_empty() {
            return Err(GpError::Empty);
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }
        let n = x.len();
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = kernel(x[i], x[j], &hyper);
                base[i * n + j] = k;
                base[j * n + i] = k;
            }
            base[i * n + i] += hyper.noise_variance;
        }
        for &jitter in &JITTERS {
            let mut k = base.clone();
            for i in 0..n {
                k[i * n + i] += jitter;
            }
            if let Some(chol) = cholesky(&k, n) {
                let mut alpha = y.to_vec();
                solve_lower(&chol, n, &mut alpha);
                solve_upper(&chol, n, &mut alpha);
                return Ok(GpModel {
                    x: x.to_vec(),
                    y: y.to_vec(),
                    hyper,
                    chol,
                    alpha,
                    jitter,
                });
            }
        }
        Err(GpError::SingularKernel)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Diagonal jitter the factorization needed (0 in the regular case).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior means and variances at `xs`. The prior mean is zero, so far
    /// from all data the posterior reverts to (0, signal_variance).
    pub fn predict(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.x.len();
        let mut means = Vec::with_capacity(xs.len());
        let mut vars = Vec::with_capacity(xs.len());
        let mut k_star = vec![0.0; n];
        for &q in xs {
            for (slot, &xi) in k_star.iter_mut().zip(&self.x) {
                *slot = kernel(q, xi, &self.hyper);
            }
            means.push(dot(&k_star, &self.alpha));
            let mut v = k_star.clone();
            solve_lower(&self.chol, n, &mut v);
            vars.push((self.hyper.signal_variance - dot(&v, &v)).max(0.0));
        }
        (means, vars)
    }

    /// Posterior (mean, variance) at a single input.
    pub fn predict_one(&self, x: f64) -> (f64, f64) {
        let (m, v) = self.predict(&[x]);
        (m[0], v[0])
    }

    /// Log marginal likelihood of the training data under the fitted
    /// hyperparameters, computed from the cached factorization.
    pub fn lml(&self) -> f64 {
        let n = self.x.len();
        let quad = dot(&self.y, &self.alpha);
        let logdet: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * quad - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Log marginal likelihood of `(x, y)` under `hyper`.
pub fn log_marginal_likelihood(x: &[f64], y: &[f64], hyper: Hyperparams) -> Result<f64, GpError> {
    Ok(GpModel::fit(x, y, hyper)?.lml())
}

/// Exhaustive grid search maximizing the log marginal likelihood.
///
/// Fewer than three observations return the default hyperparameters
/// unchanged; grid points whose kernel cannot be factorized are skipped.
pub fn optimize_hyperparams(
    x: &[f64],
    y: &[f64],
    space: &SearchSpace,
) -> Result<Hyperparams, GpError> {
    if space.length_scales.is_empty()
        || space.signal_variances.is_empty()
        || space.noise_variances.is_empty()
    {
        return Err(GpError::EmptySearchSpace);
    }
    if x.len() < 3 {
        return Ok(Hyperparams::default());
    }
    let sorted = |vs: &[f64]| {
        let mut vs = vs.to_vec();
        vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vs
    };
    let mut best: Option<(f64, Hyperparams)> = None;
    for &length_scale in &sorted(&space.length_scales) {
        for &signal_variance in &sorted(&space.signal_variances) {
            for &noise_variance in &sorted(&space.noise_variances) {
                let hyper = Hyperparams { length_scale, signal_variance, noise_variance };
                let Ok(lml) = log_marginal_likelihood(x, y, hyper) else {
                    continue;
                };
                // Strictly-greater keeps the earliest (smallest) grid point
                // on ties.
                if best.map_or(true, |(b, _)| lml > b) {
                    best = Some((lml, hyper));
                }
            }
        }
    }
    best.map(|(_, h)| h).ok_or(GpError::SingularKernel)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place lower Cholesky factor of the dense SPD matrix `k` (n×n,
/// row-major). Returns `None` when a pivot is not strictly positive.
fn cholesky(k: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = k[i * n + j];
            for t in 0..j {
                sum -= l[i * n + t] * l[j * n + t];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves L·out = out in place (forward substitution).
fn solve_lower(l: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        let mut sum = out[i];
        for t in 0..i {
            sum -= l[i * n + t] * out[t];
        }
        out[i] = sum / l[i * n + i];
    }
}

/// Solves Lᵀ·out = out in place (backward substitution).
fn solve_upper(l: &[f64], n: usize, out: &mut [f64]) {
    for i in (0..n).rev() {
        let mut sum = out[i];
        for t in i + 1..n {
            sum -= l[t * n + i] * out[t];
        }
        out[i] = sum / l[i * n + i];
    }
}
