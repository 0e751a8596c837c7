//! Numerical invariant suites: gradient vs finite differences, empirical
//! centering degeneracy, and positive-semidefiniteness of the core Gram.
//! The CLI `selfcheck` command runs all three; the test suite reuses them.

use crate::error::Result;
use crate::kernel::KernelConfig;
use crate::model::GaussianTheta;
use crate::rng::stream;
use crate::sample::Sample;
use crate::stein::{center_empirical, h_theta, v_stat_mean, SteinContext};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Outcome of one invariant suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: usize,
    pub failures: usize,
    /// Worst observed deviation, in the units of the suite's tolerance.
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} checks, {} failures, worst {:.3e} (tolerance {:.0e})",
            if self.passed() { "ok" } else { "FAIL" },
            self.name,
            self.checks,
            self.failures,
            self.worst,
            self.tolerance
        )
    }
}

fn random_theta(d: usize, rng: &mut ChaCha12Rng) -> GaussianTheta {
    let mu = DVector::from_fn(d, |_, _| rng.random::<f64>() * 4.0 - 2.0);
    let mut chol = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..a {
            chol[(a, b)] = rng.random::<f64>() - 0.5;
        }
        chol[(a, a)] = 0.5 + 1.5 * rng.random::<f64>();
    }
    GaussianTheta::new(mu, chol).expect("construction uses valid ranges")
}

fn random_point(d: usize, rng: &mut ChaCha12Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random::<f64>() * 6.0 - 3.0)
}

/// `∇_θ h_θ` against central finite differences of `h_θ` on `count` random
/// (θ, x, x') triples across d ∈ {1, 2, 3}: relative error below 1e-5 on
/// entries of size ≥ 0.1, absolute error below 1e-6 on smaller entries
/// (central differences bottom out near 1e-9 in these units).
pub fn fd_gradient_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut rng = stream(seed, &[0xD1A6, 1]);
    let tolerance = 1e-5;
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut checks = 0;
    for trial in 0..count {
        let d = 1 + trial % 3;
        let cfg = KernelConfig::new(0.4 + rng.random::<f64>(), d)?;
        let theta = random_theta(d, &mut rng);
        let x = random_point(d, &mut rng);
        let y = random_point(d, &mut rng);
        let grad = crate::stein::grad_theta_h(&theta, &x, &y, &cfg)?;
        let params = theta.to_params();
        for m in 0..params.len() {
            let h = 1e-5 * (1.0 + params[m].abs());
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[m] += h;
            minus[m] -= h;
            let fp = h_theta(&GaussianTheta::from_params(d, &plus)?, &x, &y, &cfg)?;
            let fm = h_theta(&GaussianTheta::from_params(d, &minus)?, &x, &y, &cfg)?;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (grad[m] - fd).abs() / grad[m].abs().max(0.1);
            worst = worst.max(rel);
            checks += 1;
            if rel >= tolerance {
                failures += 1;
            }
        }
    }
    Ok(SuiteReport {
        name: "grad-theta-h vs finite differences",
        checks,
        failures,
        worst,
        tolerance,
    })
}

/// Row and column sums of empirically centered Grams stay below 1e-10.
pub fn centering_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut rng = stream(seed, &[0xD1A6, 2]);
    let tolerance = 1e-10;
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut checks = 0;
    for trial in 0..count {
        let d = 1 + trial % 2;
        let n = 30 + (trial % 5) * 25;
        let cfg = KernelConfig::new(0.4 + rng.random::<f64>(), d)?;
        let theta = random_theta(d, &mut rng);
        let rows = (0..n).map(|_| random_point(d, &mut rng)).collect();
        let sample = Sample::from_rows(rows)?;
        let ctx = SteinContext::new(&sample, &cfg)?;
        let eval = ctx.theta_eval(&theta)?;
        let centered = center_empirical(&ctx.gram_h(&eval))?;
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..n {
                row += centered.get(i, j);
                col += centered.get(j, i);
            }
            let dev = row.abs().max(col.abs());
            worst = worst.max(dev);
            checks += 2;
            if dev >= tolerance {
                failures += 1;
            }
        }
    }
    Ok(SuiteReport {
        name: "empirical centering degeneracy",
        checks,
        failures,
        worst,
        tolerance,
    })
}

/// Full Stein Gram is positive semidefinite: smallest eigenvalue at least
/// `-1e-8·‖H‖₂`, and the V-statistic at least −1e-12, over `count` random
/// samples.
pub fn psd_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut rng = stream(seed, &[0xD1A6, 3]);
    let tolerance = 1e-8;
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut checks = 0;
    for trial in 0..count {
        let d = 1 + trial % 3;
        let n = 15 + trial % 20;
        let cfg = KernelConfig::new(0.4 + rng.random::<f64>(), d)?;
        let theta = random_theta(d, &mut rng);
        let rows = (0..n).map(|_| random_point(d, &mut rng)).collect();
        let sample = Sample::from_rows(rows)?;
        let ctx = SteinContext::new(&sample, &cfg)?;
        let eval = ctx.theta_eval(&theta)?;
        let gram = ctx.gram_h(&eval);
        let v = v_stat_mean(&gram);
        checks += 1;
        if v < -1e-12 {
            failures += 1;
        }
        let eigs = gram.to_dmatrix().symmetric_eigen().eigenvalues;
        let scale = eigs.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
        let min = eigs.min();
        let normalized = (-min / scale).max(0.0);
        worst = worst.max(normalized);
        checks += 1;
        if normalized >= tolerance {
            failures += 1;
        }
    }
    Ok(SuiteReport {
        name: "Stein Gram positive semidefiniteness",
        checks,
        failures,
        worst,
        tolerance,
    })
}

/// All suites at reference sizes.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        fd_gradient_suite(seed, 250)?,
        centering_suite(seed, 20)?,
        psd_suite(seed, 100)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_on_a_fixed_seed() {
        for report in run_all(0).unwrap() {
            assert!(report.passed(), "{report}");
        }
    }
}
