//! The composite goodness-of-fit test, end to end: estimate θ̂, compute the
//! observed statistic, bootstrap the quantile, decide.
//!
//! The decision compares n-scaled quantities on both sides; the unscaled
//! comparison `KSD²_U(θ̂) > Quantile(1−γ; T⁽ᵇ⁾)` multiplied through by n is
//! decision-identical. γ is the test size: the null is rejected at level γ
//! when the observed statistic exceeds the (1−γ) bootstrap quantile.
//!
//! For the corrected and naive schemes the observed statistic is
//! `n·KSD²_U(θ̂)`. The wild scheme bootstraps the V-statistic
//! `n·KSD²_U(θ̂) + n⁻¹∑_i h_θ̂(X_i,X_i)`, so its observed statistic carries
//! the same diagonal term; the diagonal is a data constant, making this
//! exactly the published wild comparison.

use crate::bootstrap::{draw_all_with, quantile, BootScheme, BootstrapDraws, CorrectionGradients};
use crate::error::{Error, Result};
use crate::estimate::{estimate, EstimatorKind, EstimatorSpec};
use crate::kernel::KernelConfig;
use crate::model::GaussianTheta;
use crate::sample::Sample;
use crate::stein::{u_stat_mean, SteinContext};
use serde::Serialize;

/// Outcome of one test run with full provenance.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    /// Output schema version.
    pub schema: u32,
    /// n-scaled observed statistic used in the decision.
    pub statistic: f64,
    /// (1−γ) bootstrap quantile of the n-scaled draws.
    pub quantile: f64,
    /// `(1 + #{b : T⁽ᵇ⁾ ≥ statistic}) / (B + 1)`, always in (0, 1].
    pub p_value: f64,
    /// `statistic > quantile`.
    pub reject: bool,
    pub theta_hat: GaussianTheta,
    pub n: usize,
    pub d: usize,
    pub b: usize,
    pub gamma: f64,
    pub seed: u64,
    pub c: f64,
    pub scheme: BootScheme,
    pub estimator: EstimatorKind,
    pub bootstrap_rejections: usize,
}

/// Finite-B valid p-value; never returns 0.
pub fn p_value(draws: &BootstrapDraws, statistic: f64) -> f64 {
    let count = draws.values.iter().filter(|&&v| v >= statistic).count();
    (1 + count) as f64 / (draws.values.len() + 1) as f64
}

/// Run the test with the given scheme (corrected by default in the CLI).
pub fn run_test(
    sample: &Sample,
    cfg: &KernelConfig,
    est: &EstimatorSpec,
    b: usize,
    gamma: f64,
    seed: u64,
    scheme: BootScheme,
) -> Result<TestResult> {
    if sample.n() < 2 {
        return Err(Error::invalid("test needs a sample of size n >= 2"));
    }
    if b == 0 {
        return Err(Error::invalid("number of bootstrap draws must be >= 1"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!(
            "gamma must lie in (0,1), got {gamma}"
        )));
    }
    let theta_hat = estimate(sample, cfg, est)?;
    let ctx = SteinContext::new(sample, cfg)?;
    let eval_hat = ctx.theta_eval(&theta_hat)?;
    let gram_hat = ctx.gram_h(&eval_hat);
    let n = sample.n() as f64;
    let scaled_u = n * u_stat_mean(&gram_hat)?;
    let statistic = match scheme {
        BootScheme::Corrected | BootScheme::Naive => scaled_u,
        // V-statistic observable: add the diagonal average the wild draws carry.
        BootScheme::Wild => scaled_u + gram_hat.diag_mean(),
    };
    let draws = draw_all_with(
        &ctx,
        sample,
        &theta_hat,
        scheme,
        b,
        est,
        seed,
        CorrectionGradients::default(),
    )?;
    let q = quantile(&draws, gamma)?;
    Ok(TestResult {
        schema: 1,
        statistic,
        quantile: q,
        p_value: p_value(&draws, statistic),
        reject: statistic > q,
        theta_hat,
        n: sample.n(),
        d: sample.dim(),
        b,
        gamma,
        seed,
        c: cfg.c(),
        scheme,
        estimator: est.kind,
        bootstrap_rejections: draws.rejections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::draw_all;
    use crate::model;
    use crate::rng::stream;

    fn null_sample(n: usize, d: usize, seed: u64) -> Sample {
        let theta = GaussianTheta::standard(d).unwrap();
        let mut rng = stream(seed, &[700]);
        model::sample(&theta, n, &mut rng).unwrap()
    }

    #[test]
    fn run_test_is_bit_deterministic() {
        let s = null_sample(40, 1, 1);
        let cfg = KernelConfig::new(1.0, 1).unwrap();
        let est = EstimatorSpec::moment();
        let a = run_test(&s, &cfg, &est, 25, 0.05, 99, BootScheme::Corrected).unwrap();
        let b = run_test(&s, &cfg, &est, 25, 0.05, 99, BootScheme::Corrected).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn tiny_gamma_uses_the_maximum_draw() {
        let s = null_sample(40, 1, 2);
        let cfg = KernelConfig::new(1.0, 1).unwrap();
        let est = EstimatorSpec::moment();
        let r = run_test(&s, &cfg, &est, 200, 1e-6, 5, BootScheme::Corrected).unwrap();
        let draws = draw_all(
            &s,
            &crate::estimate::moment_estimator(&s).unwrap(),
            BootScheme::Corrected,
            200,
            &cfg,
            &est,
            5,
        )
        .unwrap();
        let max = draws.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.quantile.to_bits(), max.to_bits());
        assert_eq!(r.reject, r.statistic > max);
    }

    #[test]
    fn rejection_is_monotone_in_gamma() {
        let cfg = KernelConfig::new(1.0, 1).unwrap();
        let est = EstimatorSpec::moment();
        for seed in 0..6u64 {
            let s = null_sample(30, 1, 100 + seed);
            let small = run_test(&s, &cfg, &est, 60, 0.01, seed, BootScheme::Corrected).unwrap();
            let large = run_test(&s, &cfg, &est, 60, 0.20, seed, BootScheme::Corrected).unwrap();
            assert!(small.quantile >= large.quantile);
            if small.reject {
                assert!(large.reject, "seed {seed}: reject at 1% but not at 20%");
            }
        }
    }

    #[test]
    fn p_value_and_decision_agree_up_to_the_discrete_convention() {
        // Exhaustive synthetic check: distinct integer draws, statistic swept
        // between them. (p < t) ⇒ reject and reject ⇒ (p ≤ t) with
        // t = (1 + ⌊γ(B+1)⌋)/(B+1).
        for b in 1..=16usize {
            let draws = BootstrapDraws {
                values: (1..=b).map(|v| v as f64).collect(),
                scheme: BootScheme::Corrected,
                seed: 0,
                b,
                rejections: 0,
            };
            for gamma in [0.02, 0.05, 0.1, 0.25, 0.5, 0.75] {
                let q = quantile(&draws, gamma).unwrap();
                for num in 0..=(2 * b + 2) {
                    let statistic = num as f64 / 2.0 + 0.25; // never ties a draw
                    let reject = statistic > q;
                    let p = p_value(&draws, statistic);
                    let t = (1.0 + (gamma * (b as f64 + 1.0)).floor()) / (b as f64 + 1.0);
                    if p < t - 1e-12 {
                        assert!(reject, "B={b} γ={gamma} stat={statistic}: p={p} < t={t}");
                    }
                    if reject {
                        assert!(p <= t + 1e-12, "B={b} γ={gamma} stat={statistic}: p={p} t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn p_value_is_never_zero() {
        let s = null_sample(30, 1, 3);
        let cfg = KernelConfig::new(1.0, 1).unwrap();
        let est = EstimatorSpec::moment();
        let r = run_test(&s, &cfg, &est, 50, 0.05, 7, BootScheme::Corrected).unwrap();
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        assert_eq!(r.reject, r.statistic > r.quantile);
    }

    #[test]
    fn wild_statistic_carries_the_diagonal_term() {
        let s = null_sample(30, 1, 4);
        let cfg = KernelConfig::new(1.0, 1).unwrap();
        let est = EstimatorSpec::moment();
        let corrected = run_test(&s, &cfg, &est, 10, 0.05, 1, BootScheme::Corrected).unwrap();
        let wild = run_test(&s, &cfg, &est, 10, 0.05, 1, BootScheme::Wild).unwrap();
        let theta = crate::estimate::moment_estimator(&s).unwrap();
        let ctx = SteinContext::new(&s, &cfg).unwrap();
        let eval = ctx.theta_eval(&theta).unwrap();
        let diag = ctx.gram_h(&eval).diag_mean();
        assert!(diag > 0.0);
        assert!((wild.statistic - corrected.statistic - diag).abs() < 1e-10);
    }

    #[test]
    fn shuffled_rows_with_matching_indices_give_the_same_draw() {
        // Permutation invariance at the level where it is literally true:
        // permute the rows and route every bootstrap index through the same
        // permutation.
        let s = null_sample(20, 1, 5);
        let cfg = KernelConfig::new(1.0, 1).unwrap();
        let est = EstimatorSpec::moment();
        let theta_hat = crate::estimate::moment_estimator(&s).unwrap();
        let perm: Vec<usize> = (0..20).rev().collect();
        let mut inverse = vec![0usize; 20];
        for (new_pos, &old) in perm.iter().enumerate() {
            inverse[old] = new_pos;
        }
        let sp = s.subsample(&perm).unwrap();
        let theta_hat_p = crate::estimate::moment_estimator(&sp).unwrap();
        // moment estimator is exactly permutation invariant
        assert_eq!(theta_hat, theta_hat_p);
        let mut rng = crate::bootstrap::draw_rng(11, 1, 0);
        let idx = crate::bootstrap::resample_indices(20, &mut rng).unwrap();
        let idx_p: Vec<usize> = idx.iter().map(|&i| inverse[i]).collect();
        let a = crate::bootstrap::corrected_stat(&s, &theta_hat, &idx, &cfg, &est).unwrap();
        let b = crate::bootstrap::corrected_stat(&sp, &theta_hat_p, &idx_p, &cfg, &est).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn argument_validation() {
        let s = null_sample(30, 1, 6);
        let cfg = KernelConfig::new(1.0, 1).unwrap();
        let est = EstimatorSpec::moment();
        assert!(run_test(&s, &cfg, &est, 0, 0.05, 0, BootScheme::Corrected).is_err());
        assert!(run_test(&s, &cfg, &est, 10, 0.0, 0, BootScheme::Corrected).is_err());
        assert!(run_test(&s, &cfg, &est, 10, 1.0, 0, BootScheme::Corrected).is_err());
        let tiny = Sample::from_flat(1, 1, &[0.0]).unwrap();
        assert!(run_test(&tiny, &cfg, &est, 10, 0.05, 0, BootScheme::Corrected).is_err());
    }
}
