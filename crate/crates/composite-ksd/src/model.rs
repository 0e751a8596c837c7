//! Parametric model families: the score function `s_θ = ∇_x log p_θ`, its
//! θ-derivatives and sampling.
//!
//! Only the d-variate Gaussian family with unknown mean and covariance ships.
//! The covariance is parameterized by its Cholesky factor `Σ = L·Lᵀ` with
//! strictly positive diagonal, so the parameter space is an open box and every
//! optimizer iterate is a valid model. The score is independent of the
//! normalizing constant, which is the point of score-based discrepancies;
//! for the Gaussian family it is simply `s(x) = -Σ⁻¹(x - μ)`.
//!
//! Parameter coordinates are packed in a fixed order: the `d` mean entries
//! first, then the lower triangle of `L` row by row, `p = d + d(d+1)/2` in
//! total. Every θ-gradient in the crate uses this order.

use crate::error::{Error, Result};
use crate::sample::Sample;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// Hard lower bound for Cholesky diagonal entries. A factor at or below this
/// is treated as a degenerate covariance and rejected rather than regularized:
/// silent jitter would corrupt the bootstrap calibration downstream.
pub const EPS_PD: f64 = 1e-10;

/// Mean vector plus lower-triangular Cholesky factor of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTheta {
    mu: DVector<f64>,
    chol: DMatrix<f64>,
}

impl GaussianTheta {
    /// Validates: square lower-triangular `chol` matching `mu`, zero strict
    /// upper triangle, diagonal entries above [`EPS_PD`], all entries finite.
    pub fn new(mu: DVector<f64>, chol: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::invalid("parameter dimension must be at least 1"));
        }
        if chol.nrows() != d || chol.ncols() != d {
            return Err(Error::DimensionMismatch(chol.nrows(), d));
        }
        if mu.iter().any(|v| !v.is_finite()) || chol.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter entry"));
        }
        for a in 0..d {
            for b in 0..d {
                if b > a && chol[(a, b)] != 0.0 {
                    return Err(Error::invalid(
                        "Cholesky factor must be lower-triangular",
                    ));
                }
            }
            if chol[(a, a)] <= EPS_PD {
                return Err(Error::estimation(format!(
                    "degenerate covariance: Cholesky diagonal entry {} is {} <= {EPS_PD}",
                    a,
                    chol[(a, a)]
                )));
            }
        }
        Ok(Self { mu, chol })
    }

    /// Standard normal parameters `(0, I_d)`.
    pub fn standard(d: usize) -> Result<Self> {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Number of free parameters `p = d + d(d+1)/2`.
    pub fn param_dim(&self) -> usize {
        param_dim(self.dim())
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Implied covariance `Σ = L·Lᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// Pack into the canonical parameter vector: mean entries, then the lower
    /// triangle of `L` row by row.
    pub fn to_params(&self) -> DVector<f64> {
        let d = self.dim();
        let mut out = DVector::zeros(param_dim(d));
        for j in 0..d {
            out[j] = self.mu[j];
        }
        let mut idx = d;
        for a in 0..d {
            for b in 0..=a {
                out[idx] = self.chol[(a, b)];
                idx += 1;
            }
        }
        out
    }

    /// Inverse of [`GaussianTheta::to_params`].
    pub fn from_params(d: usize, params: &DVector<f64>) -> Result<Self> {
        if params.len() != param_dim(d) {
            return Err(Error::DimensionMismatch(params.len(), param_dim(d)));
        }
        let mu = DVector::from_fn(d, |j, _| params[j]);
        let mut chol = DMatrix::zeros(d, d);
        let mut idx = d;
        for a in 0..d {
            for b in 0..=a {
                chol[(a, b)] = params[idx];
                idx += 1;
            }
        }
        Self::new(mu, chol)
    }
}

impl Serialize for GaussianTheta {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let mut st = serializer.serialize_struct("GaussianTheta", 2)?;
        st.serialize_field("mu", &self.mu.iter().copied().collect::<Vec<f64>>())?;
        let rows: Vec<Vec<f64>> = (0..d)
            .map(|a| (0..d).map(|b| self.chol[(a, b)]).collect())
            .collect();
        st.serialize_field("chol", &rows)?;
        st.end()
    }
}

/// `p = d + d(d+1)/2`.
pub fn param_dim(d: usize) -> usize {
    d + d * (d + 1) / 2
}

fn check_point(theta: &GaussianTheta, x: &DVector<f64>) -> Result<()> {
    if x.len() != theta.dim() {
        return Err(Error::DimensionMismatch(x.len(), theta.dim()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input point"));
    }
    Ok(())
}

/// Score `s_θ(x) = -Σ⁻¹(x - μ)`, computed with two triangular solves against
/// the Cholesky factor; the covariance is never inverted explicitly.
pub fn score(theta: &GaussianTheta, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_point(theta, x)?;
    let r = x - &theta.mu;
    let y = theta
        .chol
        .solve_lower_triangular(&r)
        .ok_or_else(|| Error::estimation("singular Cholesky factor"))?;
    let z = theta
        .chol
        .tr_solve_lower_triangular(&y)
        .ok_or_else(|| Error::estimation("singular Cholesky factor"))?;
    Ok(-z)
}

/// Per-θ solves shared by the score Jacobian at many points.
pub(crate) struct ThetaSolves {
    /// Σ⁻¹ (d×d, symmetric).
    pub sigma_inv: DMatrix<f64>,
    /// L⁻ᵀ (d×d, upper-triangular).
    pub chol_inv_t: DMatrix<f64>,
}

impl ThetaSolves {
    pub fn new(theta: &GaussianTheta) -> Result<Self> {
        let d = theta.dim();
        let eye = DMatrix::identity(d, d);
        let linv = theta
            .chol
            .solve_lower_triangular(&eye)
            .ok_or_else(|| Error::estimation("singular Cholesky factor"))?;
        // Σ⁻¹ = L⁻ᵀ L⁻¹, L⁻ᵀ = (L⁻¹)ᵀ.
        let chol_inv_t = linv.transpose();
        let sigma_inv = &chol_inv_t * &linv;
        Ok(Self {
            sigma_inv,
            chol_inv_t,
        })
    }
}

/// Fill one row block of the p×d Jacobian `(∂s_i/∂θ_m)` given the score `s`.
///
/// Mean coordinates: `∂s/∂μ_j = Σ⁻¹ e_j`.
/// Cholesky coordinates `L_(a,b)`:
/// `∂s/∂L_(a,b) = -(Σ⁻¹ e_a)·(Lᵀs)_b - (L⁻ᵀ e_b)·s_a`,
/// obtained by differentiating `Σ = L·Lᵀ` through `Σ⁻¹`.
pub(crate) fn score_jacobian_with(
    theta: &GaussianTheta,
    solves: &ThetaSolves,
    s: &DVector<f64>,
) -> DMatrix<f64> {
    let d = theta.dim();
    let p = param_dim(d);
    let t = theta.chol.transpose() * s; // Lᵀ s
    let mut jac = DMatrix::zeros(p, d);
    for j in 0..d {
        for i in 0..d {
            jac[(j, i)] = solves.sigma_inv[(i, j)];
        }
    }
    let mut m = d;
    for a in 0..d {
        for b in 0..=a {
            for i in 0..d {
                jac[(m, i)] =
                    -solves.sigma_inv[(i, a)] * t[b] - solves.chol_inv_t[(i, b)] * s[a];
            }
            m += 1;
        }
    }
    jac
}

/// Analytic Jacobian of the score in θ, one row per parameter coordinate
/// (p×d, canonical packing order).
pub fn grad_theta_score(theta: &GaussianTheta, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_point(theta, x)?;
    let solves = ThetaSolves::new(theta)?;
    let s = score(theta, x)?;
    Ok(score_jacobian_with(theta, &solves, &s))
}

/// Second θ-derivative `∂²s/∂θ_{m1}∂θ_{m2}` via central finite differences of
/// the analytic Jacobian. Diagnostic only; no runtime statistic uses it.
pub fn grad2_theta_score_fd(
    theta: &GaussianTheta,
    x: &DVector<f64>,
    m1: usize,
    m2: usize,
) -> Result<DVector<f64>> {
    let params = theta.to_params();
    let p = params.len();
    if m1 >= p || m2 >= p {
        return Err(Error::invalid("parameter coordinate out of range"));
    }
    let h = 1e-5 * (1.0 + params[m2].abs());
    let mut plus = params.clone();
    let mut minus = params.clone();
    plus[m2] += h;
    minus[m2] -= h;
    let d = theta.dim();
    let jp = grad_theta_score(&GaussianTheta::from_params(d, &plus)?, x)?;
    let jm = grad_theta_score(&GaussianTheta::from_params(d, &minus)?, x)?;
    Ok((jp.row(m1) - jm.row(m1)).transpose() / (2.0 * h))
}

/// Third θ-derivative via a further central difference of
/// [`grad2_theta_score_fd`]. Diagnostic only.
pub fn grad3_theta_score_fd(
    theta: &GaussianTheta,
    x: &DVector<f64>,
    m1: usize,
    m2: usize,
    m3: usize,
) -> Result<DVector<f64>> {
    let params = theta.to_params();
    let p = params.len();
    if m3 >= p {
        return Err(Error::invalid("parameter coordinate out of range"));
    }
    let h = 1e-4 * (1.0 + params[m3].abs());
    let mut plus = params.clone();
    let mut minus = params.clone();
    plus[m3] += h;
    minus[m3] -= h;
    let d = theta.dim();
    let gp = grad2_theta_score_fd(&GaussianTheta::from_params(d, &plus)?, x, m1, m2)?;
    let gm = grad2_theta_score_fd(&GaussianTheta::from_params(d, &minus)?, x, m1, m2)?;
    Ok((gp - gm) / (2.0 * h))
}

/// `n` i.i.d. draws `X = μ + L·Z` with `Z` standard normal; deterministic
/// given the stream.
pub fn sample(theta: &GaussianTheta, n: usize, rng: &mut ChaCha12Rng) -> Result<Sample> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let d = theta.dim();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        rows.push(&theta.mu + &theta.chol * z);
    }
    Sample::from_rows(rows)
}

/// Contract for a parametric family: data dimension, parameter dimension,
/// score, its θ-Jacobian and sampling. The Gaussian family is the only
/// implementation shipped; other families are an extension point.
///
/// The score must be continuously differentiable in `x` and θ inside the
/// declared bounds; that contract is documented, not machine-checked.
pub trait ModelFamily {
    type Theta;

    fn data_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn score(&self, theta: &Self::Theta, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn grad_theta_score(&self, theta: &Self::Theta, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn sample(&self, theta: &Self::Theta, n: usize, rng: &mut ChaCha12Rng) -> Result<Sample>;
}

/// The d-variate Gaussian family with unknown mean and covariance.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFamily {
    d: usize,
}

impl GaussianFamily {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("data dimension must be at least 1"));
        }
        Ok(Self { d })
    }
}

impl ModelFamily for GaussianFamily {
    type Theta = GaussianTheta;

    fn data_dim(&self) -> usize {
        self.d
    }

    fn param_dim(&self) -> usize {
        param_dim(self.d)
    }

    fn score(&self, theta: &GaussianTheta, x: &DVector<f64>) -> Result<DVector<f64>> {
        score(theta, x)
    }

    fn grad_theta_score(&self, theta: &GaussianTheta, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        grad_theta_score(theta, x)
    }

    fn sample(&self, theta: &GaussianTheta, n: usize, rng: &mut ChaCha12Rng) -> Result<Sample> {
        sample(theta, n, rng)
    }
}
