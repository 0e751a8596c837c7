//! Estimators of θ as functionals of the empirical measure: the closed-form
//! moment estimator and a derivative-free minimum-KSD estimator.
//!
//! Both are pure functions of the sample, so the bootstrap can re-apply the
//! identical functional to resampled data. The moment estimator sums in a
//! canonical (sorted) order, which makes it exactly invariant under
//! permutation of the sample rows.

use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::model::{param_dim, GaussianTheta, EPS_PD};
use crate::neldermead::{minimize, NelderMeadOptions};
use crate::numeric::mean_canonical;
use crate::sample::Sample;
use crate::stein::SteinContext;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

/// Which functional ψ(Q_n) produces θ̂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Empirical mean and plug-in covariance (denominator n).
    Moment,
    /// Nelder–Mead minimization of the KSD U-statistic, started at the
    /// moment estimate.
    MinKsd,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moment" => Ok(Self::Moment),
            "min-ksd" | "min_ksd" => Ok(Self::MinKsd),
            other => Err(Error::invalid(format!(
                "unknown estimator '{other}' (expected moment | min-ksd)"
            ))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Moment => write!(f, "moment"),
            Self::MinKsd => write!(f, "min_ksd"),
        }
    }
}

/// Box bounds on the packed parameter vector.
#[derive(Debug, Clone)]
pub struct ParamBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// Estimator selection plus the minimum-KSD optimizer knobs.
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub max_iterations: usize,
    pub simplex_tolerance: f64,
    /// Explicit box for the optimizer; `None` derives a default box from the
    /// sample (see [`default_bounds`]).
    pub bounds: Option<ParamBounds>,
}

impl EstimatorSpec {
    pub fn moment() -> Self {
        Self {
            kind: EstimatorKind::Moment,
            max_iterations: 500,
            simplex_tolerance: 1e-8,
            bounds: None,
        }
    }

    pub fn min_ksd() -> Self {
        Self {
            kind: EstimatorKind::MinKsd,
            ..Self::moment()
        }
    }
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self::moment()
    }
}

/// Result of a minimum-KSD fit with its convergence diagnostics.
#[derive(Debug, Clone)]
pub struct MinKsdFit {
    pub theta: GaussianTheta,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before meeting the simplex
    /// tolerance; a warning, not an error.
    pub converged: bool,
    /// ∞-norm of the KSD U-statistic gradient at the returned point.
    pub grad_inf_norm: f64,
}

/// Empirical mean and plug-in covariance `(1/n)∑(X_i−μ̂)(X_i−μ̂)ᵀ`, returned
/// as mean plus Cholesky factor. A singular empirical covariance is a hard
/// error; nothing is regularized.
pub fn moment_estimator(sample: &Sample) -> Result<GaussianTheta> {
    let n = sample.n();
    let d = sample.dim();
    if n < 2 {
        return Err(Error::invalid("moment estimator needs n >= 2"));
    }
    let mut mu = DVector::zeros(d);
    let mut buf = vec![0.0; n];
    for j in 0..d {
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = sample.row(i)[j];
        }
        mu[j] = mean_canonical(&mut buf);
    }
    let mut sigma = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in j..d {
            for (i, slot) in buf.iter_mut().enumerate() {
                let row = sample.row(i);
                *slot = (row[j] - mu[j]) * (row[k] - mu[k]);
            }
            let v = mean_canonical(&mut buf);
            sigma[(j, k)] = v;
            sigma[(k, j)] = v;
        }
    }
    let chol = Cholesky::new(sigma)
        .ok_or_else(|| Error::estimation("singular empirical covariance"))?
        .l();
    if chol.diagonal().iter().any(|&v| v <= EPS_PD) {
        return Err(Error::estimation(
            "empirical covariance is numerically singular",
        ));
    }
    GaussianTheta::new(mu, chol)
}

/// Default optimizer box: mean coordinates within ±10 data scales of the
/// sample mean, Cholesky diagonals in `[1e-3, 10·scale]`, off-diagonals in
/// `±10·scale`, where the scale is the largest per-coordinate plug-in
/// standard deviation. Centering at the sample mean keeps the moment
/// estimate (the start point) strictly inside the box for any data.
pub fn default_bounds(sample: &Sample) -> Result<ParamBounds> {
    let start = moment_estimator(sample)?;
    let d = sample.dim();
    let cov = start.covariance();
    let mut scale = 0.0f64;
    for j in 0..d {
        scale = scale.max(cov[(j, j)].sqrt());
    }
    let scale = scale.max(1e-3);
    let p = param_dim(d);
    let mut lower = DVector::zeros(p);
    let mut upper = DVector::zeros(p);
    for j in 0..d {
        lower[j] = start.mu()[j] - 10.0 * scale;
        upper[j] = start.mu()[j] + 10.0 * scale;
    }
    let mut idx = d;
    for a in 0..d {
        for b in 0..=a {
            if a == b {
                lower[idx] = 1e-3;
                upper[idx] = 10.0 * scale;
            } else {
                lower[idx] = -10.0 * scale;
                upper[idx] = 10.0 * scale;
            }
            idx += 1;
        }
    }
    Ok(ParamBounds { lower, upper })
}

/// Derivative-free minimization of `θ ↦ KSD²_U(sample, θ)` over the box,
/// started at the moment estimate. Returns the best point found; running out
/// of iterations is reported through `converged`, not as an error.
pub fn min_ksd_estimator(
    sample: &Sample,
    cfg: &KernelConfig,
    spec: &EstimatorSpec,
) -> Result<MinKsdFit> {
    let d = sample.dim();
    let start = moment_estimator(sample)?;
    let bounds = match &spec.bounds {
        Some(b) => {
            if b.lower.len() != param_dim(d) || b.upper.len() != param_dim(d) {
                return Err(Error::DimensionMismatch(b.lower.len(), param_dim(d)));
            }
            b.clone()
        }
        None => default_bounds(sample)?,
    };
    let x0 = start.to_params();
    for i in 0..x0.len() {
        if x0[i] < bounds.lower[i] || x0[i] > bounds.upper[i] {
            return Err(Error::invalid(format!(
                "initial point coordinate {i} outside the optimizer box"
            )));
        }
    }
    let ctx = SteinContext::new(sample, cfg)?;
    let mut objective = |x: &DVector<f64>| match GaussianTheta::from_params(d, x) {
        Ok(theta) => ctx.ksd_u(&theta).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    };
    let opts = NelderMeadOptions {
        max_iterations: spec.max_iterations,
        tolerance: spec.simplex_tolerance,
    };
    let res = minimize(&mut objective, &x0, &bounds.lower, &bounds.upper, &opts);
    let theta = GaussianTheta::from_params(d, &res.x)?;
    let grad = ctx.grad_ksd_u(&theta)?;
    Ok(MinKsdFit {
        theta,
        objective: res.fx,
        iterations: res.iterations,
        converged: res.converged,
        grad_inf_norm: grad.amax(),
    })
}

/// Apply the functional named by `spec` to the sample.
pub fn estimate(sample: &Sample, cfg: &KernelConfig, spec: &EstimatorSpec) -> Result<GaussianTheta> {
    match spec.kind {
        EstimatorKind::Moment => moment_estimator(sample),
        EstimatorKind::MinKsd => Ok(min_ksd_estimator(sample, cfg, spec)?.theta),
    }
}
