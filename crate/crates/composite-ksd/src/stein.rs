//! The Stein core
//! `h_θ(x,x') = s_θ(x)ᵀk(x,x')s_θ(x') + s_θ(x)ᵀ∇_{x'}k + (∇_x k)ᵀs_θ(x') + ∑_i ∂²k/∂x_i∂x'_i`,
//! its θ-gradient, Gram matrices over samples, U- and V-statistics and
//! empirical centering.
//!
//! `h_θ` is a positive-semidefinite symmetric core; its expectation under the
//! sampling distribution is the squared kernel Stein discrepancy, zero exactly
//! when the model matches the data law. The U-statistic
//! `(1/(n(n-1)))∑_{i≠j} h_θ(X_i,X_j)` estimates it without bias.
//!
//! Gram matrices are materialized (O(n²) memory): the bootstrap re-evaluates
//! the core at a fresh parameter per draw and sample sizes stay in the desk
//! range (n ≲ 2000). U/V statistics accumulate in row-major order with a
//! compensated accumulator, so repeated evaluation is bit-stable and
//! row-permutation changes results only at the ~1e-12 level.

use crate::error::{Error, Result};
use crate::kernel::{self, KernelConfig};
use crate::model::{self, GaussianTheta};
use crate::numeric::CompensatedSum;
use crate::sample::Sample;
use nalgebra::{DMatrix, DVector};

/// Square matrix of core evaluations, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("empty matrix"));
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = f(i, j);
            }
        }
        Ok(Self { n, data })
    }

    pub(crate) fn from_vec(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// Mean of the diagonal.
    pub fn diag_mean(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for i in 0..self.n {
            acc.add(self.get(i, i));
        }
        acc.total() / self.n as f64
    }
}

/// A core Gram matrix together with (optionally) the per-parameter Gram
/// matrices of `∇_θ h_θ`.
pub struct GramBundle {
    pub h: Gram,
    pub grad: Option<Vec<Gram>>,
}

/// The Stein core evaluated at a single pair of points.
pub fn h_theta(
    theta: &GaussianTheta,
    x: &DVector<f64>,
    xprime: &DVector<f64>,
    cfg: &KernelConfig,
) -> Result<f64> {
    let s = model::score(theta, x)?;
    let sp = model::score(theta, xprime)?;
    let k = kernel::eval(x, xprime, cfg)?;
    let gxp = kernel::grad_xprime(x, xprime, cfg)?;
    let gx = kernel::grad_x(x, xprime, cfg)?;
    let ct = kernel::cross_trace(x, xprime, cfg)?;
    // The two mixed terms swap under (x, x') exchange; summing them first
    // keeps the whole expression bit-exactly symmetric.
    let mixed = s.dot(&gxp) + gx.dot(&sp);
    Ok(s.dot(&sp) * k + mixed + ct)
}

/// θ-gradient of the core: product rule applied to the four terms, treating
/// only the scores as θ-dependent. Returns the p-vector in canonical packing
/// order; symmetric in `(x, x')`.
pub fn grad_theta_h(
    theta: &GaussianTheta,
    x: &DVector<f64>,
    xprime: &DVector<f64>,
    cfg: &KernelConfig,
) -> Result<DVector<f64>> {
    let s = model::score(theta, x)?;
    let sp = model::score(theta, xprime)?;
    let ja = model::grad_theta_score(theta, x)?; // p×d
    let jb = model::grad_theta_score(theta, xprime)?;
    let k = kernel::eval(x, xprime, cfg)?;
    let gxp = kernel::grad_xprime(x, xprime, cfg)?;
    let gx = kernel::grad_x(x, xprime, cfg)?;
    // (∂_θ s)ᵀ(k·s' + ∇_{x'}k) + (∂_θ s')ᵀ(k·s + ∇_x k)
    Ok(ja * (&sp * k + gxp) + jb * (&s * k + gx))
}

/// Second θ-derivative of the core by central finite differences of
/// [`grad_theta_h`]; a p×p matrix, symmetric up to FD error. Diagnostic only.
pub fn hessian_theta_h(
    theta: &GaussianTheta,
    x: &DVector<f64>,
    xprime: &DVector<f64>,
    cfg: &KernelConfig,
) -> Result<DMatrix<f64>> {
    let params = theta.to_params();
    let p = params.len();
    let d = theta.dim();
    let mut hess = DMatrix::zeros(p, p);
    for l in 0..p {
        let h = 1e-5 * (1.0 + params[l].abs());
        let mut plus = params.clone();
        let mut minus = params.clone();
        plus[l] += h;
        minus[l] -= h;
        let gp = grad_theta_h(&GaussianTheta::from_params(d, &plus)?, x, xprime, cfg)?;
        let gm = grad_theta_h(&GaussianTheta::from_params(d, &minus)?, x, xprime, cfg)?;
        for m in 0..p {
            hess[(m, l)] = (gp[m] - gm[m]) / (2.0 * h);
        }
    }
    Ok(hess)
}

/// Precomputed θ-independent quantities for one (sample, kernel) pair:
/// the kernel Gram, the cross-derivative trace Gram and flat copies of the
/// data rows.
pub struct SteinContext {
    rows: Vec<DVector<f64>>,
    flat: Vec<f64>,
    k: Vec<f64>,
    cross: Vec<f64>,
    n: usize,
    d: usize,
    cfg: KernelConfig,
}

/// Per-θ quantities over a context: scores and score Jacobians at every row.
pub struct ThetaEval {
    /// n×d row-major scores.
    scores: Vec<f64>,
    /// n×p×d Jacobians, point-major then parameter-major.
    jacs: Vec<f64>,
    p: usize,
}

impl SteinContext {
    pub fn new(sample: &Sample, cfg: &KernelConfig) -> Result<Self> {
        if sample.dim() != cfg.dim() {
            return Err(Error::DimensionMismatch(sample.dim(), cfg.dim()));
        }
        let n = sample.n();
        let d = sample.dim();
        let flat = sample.flat();
        let ell2 = cfg.ell() * cfg.ell();
        let mut k = vec![0.0; n * n];
        let mut cross = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let r2 = kernel::sq_dist(&flat[i * d..(i + 1) * d], &flat[j * d..(j + 1) * d]);
                let kij = (-r2 / (2.0 * ell2)).exp();
                let cij = kij * (d as f64 / ell2 - r2 / (ell2 * ell2));
                k[i * n + j] = kij;
                k[j * n + i] = kij;
                cross[i * n + j] = cij;
                cross[j * n + i] = cij;
            }
        }
        Ok(Self {
            rows: sample.rows().to_vec(),
            flat,
            k,
            cross,
            n,
            d,
            cfg: *cfg,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn cfg(&self) -> &KernelConfig {
        &self.cfg
    }

    /// Evaluate scores and score Jacobians at every row for one θ.
    pub fn theta_eval(&self, theta: &GaussianTheta) -> Result<ThetaEval> {
        if theta.dim() != self.d {
            return Err(Error::DimensionMismatch(theta.dim(), self.d));
        }
        let solves = model::ThetaSolves::new(theta)?;
        let p = theta.param_dim();
        let mut scores = Vec::with_capacity(self.n * self.d);
        let mut jacs = Vec::with_capacity(self.n * p * self.d);
        for row in &self.rows {
            let s = model::score(theta, row)?;
            let jac = model::score_jacobian_with(theta, &solves, &s);
            scores.extend(s.iter().copied());
            for m in 0..p {
                for i in 0..self.d {
                    jacs.push(jac[(m, i)]);
                }
            }
        }
        Ok(ThetaEval { scores, jacs, p })
    }

    /// Gram matrix of `h_θ` over all row pairs, diagonal included. The
    /// diagonal runs through the same code path as off-diagonal entries.
    pub fn gram_h(&self, eval: &ThetaEval) -> Gram {
        let (n, d) = (self.n, self.d);
        let ell2 = self.cfg.ell() * self.cfg.ell();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let xi = &self.flat[i * d..(i + 1) * d];
            let si = &eval.scores[i * d..(i + 1) * d];
            for j in i..n {
                let xj = &self.flat[j * d..(j + 1) * d];
                let sj = &eval.scores[j * d..(j + 1) * d];
                let mut ss = 0.0;
                let mut ds = 0.0;
                for m in 0..d {
                    let diff = xi[m] - xj[m];
                    ss += si[m] * sj[m];
                    ds += diff * (si[m] - sj[m]);
                }
                let v = self.k[i * n + j] * (ss + ds / ell2) + self.cross[i * n + j];
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Gram::from_vec(n, data)
    }

    /// Materialized per-parameter Gram matrices of `∇_θ h_θ`. O(n²·p·d) work;
    /// meant for diagnostics and small-n checks, not the bootstrap hot path.
    pub fn gram_grad(&self, eval: &ThetaEval) -> Vec<Gram> {
        let (n, d, p) = (self.n, self.d, eval.p);
        let ell2 = self.cfg.ell() * self.cfg.ell();
        let mut out = vec![vec![0.0; n * n]; p];
        for i in 0..n {
            let xi = &self.flat[i * d..(i + 1) * d];
            let si = &eval.scores[i * d..(i + 1) * d];
            let ji = &eval.jacs[i * p * d..(i + 1) * p * d];
            for j in i..n {
                let xj = &self.flat[j * d..(j + 1) * d];
                let sj = &eval.scores[j * d..(j + 1) * d];
                let jj = &eval.jacs[j * p * d..(j + 1) * p * d];
                let kij = self.k[i * n + j];
                for m in 0..p {
                    let jim = &ji[m * d..(m + 1) * d];
                    let jjm = &jj[m * d..(m + 1) * d];
                    let mut acc = 0.0;
                    for t in 0..d {
                        let diff = (xi[t] - xj[t]) / ell2;
                        acc += jim[t] * (sj[t] + diff) + jjm[t] * (si[t] - diff);
                    }
                    let v = kij * acc;
                    out[m][i * n + j] = v;
                    out[m][j * n + i] = v;
                }
            }
        }
        out.into_iter().map(|d| Gram::from_vec(n, d)).collect()
    }

    pub fn gram_bundle(&self, theta: &GaussianTheta, with_grad: bool) -> Result<GramBundle> {
        let eval = self.theta_eval(theta)?;
        let h = self.gram_h(&eval);
        let grad = with_grad.then(|| self.gram_grad(&eval));
        Ok(GramBundle { h, grad })
    }

    /// Weighted double contraction of the `∇_θ h` tensor without
    /// materializing it:
    /// `(∑_{a,b} c_a c_b ∇h_ab − ∑_a c_a² ... )` is not what a resampled
    /// U-statistic needs; the right reduction over bootstrap positions is
    /// `(cᵀGc − ∑_a c_a G_aa) / (n(n−1))` per parameter, where `c` holds the
    /// multiplicities. By the pair symmetry of the core this collapses to
    /// `2·∑_a c_a J_aᵀ(v_a − s_a)/(n(n−1))` with
    /// `v_a = ∑_b c_b k_ab (s_b + (x_a−x_b)/ℓ²)`, which is O(n²·d) instead of
    /// O(n²·p·d). Passing the all-ones weights gives the plain U-statistic.
    pub fn grad_u_stat(&self, eval: &ThetaEval, weights: Option<&[f64]>) -> Result<DVector<f64>> {
        let (n, d, p) = (self.n, self.d, eval.p);
        if n < 2 {
            return Err(Error::invalid("U-statistic needs n >= 2"));
        }
        let ones;
        let c: &[f64] = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch(w.len(), n));
                }
                w
            }
            None => {
                ones = vec![1.0; n];
                &ones
            }
        };
        let ell2 = self.cfg.ell() * self.cfg.ell();
        let mut acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); p];
        let mut v = vec![0.0; d];
        for a in 0..n {
            if c[a] == 0.0 {
                continue;
            }
            let xa = &self.flat[a * d..(a + 1) * d];
            let sa = &eval.scores[a * d..(a + 1) * d];
            v.iter_mut().for_each(|t| *t = 0.0);
            for b in 0..n {
                let cb = c[b];
                if cb == 0.0 {
                    continue;
                }
                let w = cb * self.k[a * n + b];
                let xb = &self.flat[b * d..(b + 1) * d];
                let sb = &eval.scores[b * d..(b + 1) * d];
                for t in 0..d {
                    v[t] += w * (sb[t] + (xa[t] - xb[t]) / ell2);
                }
            }
            // subtract the diagonal contribution: G_aa = 2·J_a s_a (k_aa = 1)
            for t in 0..d {
                v[t] -= sa[t];
            }
            let ja = &eval.jacs[a * p * d..(a + 1) * p * d];
            for m in 0..p {
                let jam = &ja[m * d..(m + 1) * d];
                let mut dot = 0.0;
                for t in 0..d {
                    dot += jam[t] * v[t];
                }
                acc[m].add(2.0 * c[a] * dot);
            }
        }
        let denom = (n as f64) * (n as f64 - 1.0);
        Ok(DVector::from_iterator(p, acc.iter().map(|a| a.total() / denom)))
    }

    pub fn ksd_u(&self, theta: &GaussianTheta) -> Result<f64> {
        let eval = self.theta_eval(theta)?;
        let gram = self.gram_h(&eval);
        u_stat_mean(&gram)
    }

    pub fn ksd_v(&self, theta: &GaussianTheta) -> Result<f64> {
        let eval = self.theta_eval(theta)?;
        let gram = self.gram_h(&eval);
        Ok(v_stat_mean(&gram))
    }

    pub fn grad_ksd_u(&self, theta: &GaussianTheta) -> Result<DVector<f64>> {
        let eval = self.theta_eval(theta)?;
        self.grad_u_stat(&eval, None)
    }
}

/// Off-diagonal mean `(1/(n(n-1)))∑_{i≠j} H_ij`, row-major compensated order.
pub fn u_stat_mean(gram: &Gram) -> Result<f64> {
    let n = gram.n();
    if n < 2 {
        return Err(Error::invalid("U-statistic needs n >= 2"));
    }
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc.add(gram.get(i, j));
            }
        }
    }
    Ok(acc.total() / (n as f64 * (n as f64 - 1.0)))
}

/// Full mean `(1/n²)∑_{i,j} H_ij`, diagonal included; non-negative for a
/// positive-semidefinite core up to rounding.
pub fn v_stat_mean(gram: &Gram) -> f64 {
    let n = gram.n();
    let mut acc = CompensatedSum::new();
    for v in gram.as_slice() {
        acc.add(*v);
    }
    acc.total() / (n as f64 * n as f64)
}

/// Resampled U-statistic of a stored core: sums the core over all ordered
/// position pairs `i≠j` of the bootstrap index vector, which reduces to
/// `(cᵀMc − ∑_a c_a M_aa)/(n(n−1))` over multiplicities `c`. Positions with
/// `i≠j` count even when the resampled values collide.
pub fn u_stat_resampled(gram: &Gram, counts: &[f64]) -> Result<f64> {
    let n = gram.n();
    if counts.len() != n {
        return Err(Error::DimensionMismatch(counts.len(), n));
    }
    if n < 2 {
        return Err(Error::invalid("U-statistic needs n >= 2"));
    }
    let mut total = CompensatedSum::new();
    for a in 0..n {
        if counts[a] == 0.0 {
            continue;
        }
        let mut row = CompensatedSum::new();
        for b in 0..n {
            if counts[b] != 0.0 {
                row.add(counts[b] * gram.get(a, b));
            }
        }
        total.add(counts[a] * row.total());
        total.add(-counts[a] * gram.get(a, a));
    }
    Ok(total.total() / (n as f64 * (n as f64 - 1.0)))
}

/// Empirically centered version of a square core matrix:
/// `M_ij = H_ij − rowmean_i − colmean_j + grandmean`, all means over all `n`
/// indices (diagonal included). Every row and column of the result sums to
/// zero up to rounding, which is exactly degeneracy of the core with respect
/// to the empirical measure.
pub fn center_empirical(h: &Gram) -> Result<Gram> {
    let n = h.n();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let nf = n as f64;
    let mut row_means = vec![0.0; n];
    let mut col_means = vec![0.0; n];
    for i in 0..n {
        let mut acc = CompensatedSum::new();
        for j in 0..n {
            acc.add(h.get(i, j));
        }
        row_means[i] = acc.total() / nf;
    }
    for j in 0..n {
        let mut acc = CompensatedSum::new();
        for i in 0..n {
            acc.add(h.get(i, j));
        }
        col_means[j] = acc.total() / nf;
    }
    let mut grand = CompensatedSum::new();
    for &m in &row_means {
        grand.add(m);
    }
    let g = grand.total() / nf;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = h.get(i, j) - row_means[i] - col_means[j] + g;
        }
    }
    Ok(Gram::from_vec(n, data))
}

/// U-statistic `(1/(n(n-1)))∑_{i≠j} h_θ(X_i, X_j)`.
pub fn ksd_u(sample: &Sample, theta: &GaussianTheta, cfg: &KernelConfig) -> Result<f64> {
    SteinContext::new(sample, cfg)?.ksd_u(theta)
}

/// V-statistic `(1/n²)∑_{i,j} h_θ(X_i, X_j)`, diagonal included.
pub fn ksd_v(sample: &Sample, theta: &GaussianTheta, cfg: &KernelConfig) -> Result<f64> {
    SteinContext::new(sample, cfg)?.ksd_v(theta)
}

/// θ-gradient of the U-statistic: off-diagonal mean of `∇_θ h_θ(X_i, X_j)`.
pub fn grad_ksd_u(
    sample: &Sample,
    theta: &GaussianTheta,
    cfg: &KernelConfig,
) -> Result<DVector<f64>> {
    SteinContext::new(sample, cfg)?.grad_ksd_u(theta)
}
