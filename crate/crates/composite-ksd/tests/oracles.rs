//! Independent oracles: straight-line transcriptions and Monte Carlo ground
//! truths that never reuse the library's aggregation paths.

use composite_ksd::bootstrap::{
    corrected_stat, draw_all, draw_rng, resample_indices, BootScheme,
};
use composite_ksd::estimate::{moment_estimator, EstimatorSpec};
use composite_ksd::kernel::KernelConfig;
use composite_ksd::model::{self, GaussianTheta};
use composite_ksd::rng::stream;
use composite_ksd::sample::Sample;
use composite_ksd::stein::{hessian_theta_h, ksd_u, SteinContext};
use nalgebra::DMatrix;

/// Corrected bootstrap statistic for a 3-point sample, evaluated step by
/// step with plain arithmetic: scores, kernel, core, centering, resampled
/// means and the correction term are all written out inline (d = 1, ℓ = 1).
#[test]
fn corrected_stat_matches_straight_line_transcription() {
    let x = [0.3f64, -0.7, 1.1];
    let n = 3usize;
    let boot_idx = [0usize, 0, 2]; // resampled rows (x1, x1, x3)

    // moment estimates on the original and the resampled data
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let plug_in_sd = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let mu_hat = mean(&x);
    let l_hat = plug_in_sd(&x);
    let xs = [x[0], x[0], x[2]];
    let mu_star = mean(&xs);
    let l_star = plug_in_sd(&xs);

    // core pieces at ℓ = 1, d = 1
    let kern = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0f64).exp();
    let h = |mu: f64, l: f64, a: f64, b: f64| {
        let s = -(a - mu) / (l * l);
        let sp = -(b - mu) / (l * l);
        let k = kern(a, b);
        let diff = a - b;
        s * sp * k + s * (diff * k) + (-(diff) * k) * sp + k * (1.0 - diff * diff)
    };
    // θ-gradient of the core: coordinates (μ, L)
    let grad_h = |mu: f64, l: f64, a: f64, b: f64| -> [f64; 2] {
        let s = -(a - mu) / (l * l);
        let sp = -(b - mu) / (l * l);
        let k = kern(a, b);
        let diff = a - b;
        // ∂s/∂μ = 1/L², ∂s/∂L = −2s/L
        let (ja_mu, ja_l) = (1.0 / (l * l), -2.0 * s / l);
        let (jb_mu, jb_l) = (1.0 / (l * l), -2.0 * sp / l);
        let right_a = k * sp + diff * k; // k·s' + ∇_{x'}k
        let right_b = k * s - diff * k; // k·s + ∇_x k
        [
            ja_mu * right_a + jb_mu * right_b,
            ja_l * right_a + jb_l * right_b,
        ]
    };

    // centered Gram of h_{θ*} on the ORIGINAL points
    let mut gram = [[0.0f64; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            gram[i][j] = h(mu_star, l_star, x[i], x[j]);
        }
    }
    let mut row = [0.0f64; 3];
    let mut col = [0.0f64; 3];
    let mut grand = 0.0;
    for i in 0..n {
        for j in 0..n {
            row[i] += gram[i][j] / 3.0;
            col[j] += gram[i][j] / 3.0;
            grand += gram[i][j] / 9.0;
        }
    }
    let mut centered = [[0.0f64; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            centered[i][j] = gram[i][j] - row[i] - col[j] + grand;
        }
    }
    // resampled U-statistic of the centered core: positions i ≠ j
    let mut ustar = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                ustar += centered[boot_idx[i]][boot_idx[j]];
            }
        }
    }
    ustar /= (n * (n - 1)) as f64;

    // gradient U-statistics: over resampled pairs at θ* and at θ̂, and over
    // the original pairs at θ̂
    let mut g_star_res = [0.0f64; 2];
    let mut g_hat_res = [0.0f64; 2];
    let mut g_hat_full = [0.0f64; 2];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let gs = grad_h(mu_star, l_star, xs[i], xs[j]);
                let gr = grad_h(mu_hat, l_hat, xs[i], xs[j]);
                let gh = grad_h(mu_hat, l_hat, x[i], x[j]);
                for m in 0..2 {
                    g_star_res[m] += gs[m] / 6.0;
                    g_hat_res[m] += gr[m] / 6.0;
                    g_hat_full[m] += gh[m] / 6.0;
                }
            }
        }
    }
    // trapezoidal gradient between θ̂ and θ*, minus the original-sample mean
    let factor = |m: usize| 0.5 * (g_star_res[m] + g_hat_res[m]) - g_hat_full[m];
    let correction = 3.0 * ((mu_star - mu_hat) * factor(0) + (l_star - l_hat) * factor(1));
    let expected = 3.0 * ustar + correction;

    // library path
    let sample = Sample::from_flat(3, 1, &x).unwrap();
    let cfg = KernelConfig::new(1.0, 1).unwrap();
    let theta_hat = moment_estimator(&sample).unwrap();
    assert!((theta_hat.mu()[0] - mu_hat).abs() < 1e-15);
    let got = corrected_stat(&sample, &theta_hat, &boot_idx, &cfg, &EstimatorSpec::moment())
        .unwrap();
    assert!(
        (got - expected).abs() < 1e-10 * expected.abs().max(1.0),
        "library {got} vs transcription {expected}"
    );
}

/// Bootstrap calibration against Monte Carlo ground truth: for null data the
/// 0.95 quantile of corrected draws sits within 15% of the 0.95 quantile of
/// the true statistic distribution over fresh datasets.
#[test]
fn corrected_quantile_tracks_the_true_null_quantile() {
    let n = 300;
    let cfg = KernelConfig::new(1.0, 1).unwrap();
    let theta0 = GaussianTheta::standard(1).unwrap();
    let est = EstimatorSpec::moment();

    // ground truth: 2000 fresh datasets
    let reps = 2000;
    let mut stats = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = stream(4242, &[1, rep as u64]);
        let s = model::sample(&theta0, n, &mut rng).unwrap();
        let theta_hat = moment_estimator(&s).unwrap();
        stats.push(n as f64 * ksd_u(&s, &theta_hat, &cfg).unwrap());
    }
    stats.sort_unstable_by(f64::total_cmp);
    let q_true = stats[(0.95f64 * reps as f64).ceil() as usize - 1];

    // one dataset, B = 2000 corrected draws
    let mut rng = stream(4242, &[2]);
    let s = model::sample(&theta0, n, &mut rng).unwrap();
    let theta_hat = moment_estimator(&s).unwrap();
    let draws = draw_all(&s, &theta_hat, BootScheme::Corrected, 2000, &cfg, &est, 77).unwrap();
    let mut values = draws.values.clone();
    values.sort_unstable_by(f64::total_cmp);
    let q_boot = values[(0.95f64 * 2000.0).ceil() as usize - 1];

    let rel = (q_boot - q_true).abs() / q_true.abs();
    assert!(
        rel < 0.15,
        "bootstrap q95 {q_boot} vs Monte Carlo q95 {q_true} (rel {rel:.3})"
    );
}

/// The U-statistic average of the core's θ-Hessian over null data estimates
/// the curvature at the population minimizer, so it is positive semidefinite
/// up to sampling and finite-difference error.
#[test]
fn hessian_average_is_positive_semidefinite_at_the_null() {
    let theta0 = GaussianTheta::standard(1).unwrap();
    let cfg = KernelConfig::new(1.0, 1).unwrap();
    let mut rng = stream(88, &[0]);
    let n = 120;
    let s = model::sample(&theta0, n, &mut rng).unwrap();
    let p = theta0.param_dim();
    let mut acc = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += hessian_theta_h(&theta0, s.row(i), s.row(j), &cfg).unwrap();
            }
        }
    }
    acc /= (n * (n - 1)) as f64;
    let sym = (&acc + acc.transpose()) * 0.5;
    let eigs = sym.symmetric_eigen().eigenvalues;
    assert!(
        eigs.min() > -1e-2,
        "minimum eigenvalue {} of the averaged Hessian",
        eigs.min()
    );
}

/// Null scaling: the observed statistic is O(1) relative to the spread of
/// the corrected draws (n = 2000 would blow up any √n-scale mistake).
#[test]
fn null_statistic_is_within_three_bootstrap_sd() {
    let n = 2000;
    let cfg = KernelConfig::new(1.0, 1).unwrap();
    let theta0 = GaussianTheta::standard(1).unwrap();
    let mut rng = stream(91, &[0]);
    let s = model::sample(&theta0, n, &mut rng).unwrap();
    let theta_hat = moment_estimator(&s).unwrap();
    let statistic = n as f64 * ksd_u(&s, &theta_hat, &cfg).unwrap();
    let draws = draw_all(
        &s,
        &theta_hat,
        BootScheme::Corrected,
        200,
        &cfg,
        &EstimatorSpec::moment(),
        5,
    )
    .unwrap();
    let mean = draws.values.iter().sum::<f64>() / 200.0;
    let sd = (draws.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 199.0).sqrt();
    assert!(
        statistic.abs() < 3.0 * sd.max(1e-12),
        "statistic {statistic} vs draw sd {sd}"
    );
}

/// The minimum-KSD functional works inside the bootstrap loop too (both
/// estimator paths are supported for re-estimation).
#[test]
fn bootstrap_supports_the_min_ksd_estimator() {
    let theta0 = GaussianTheta::standard(1).unwrap();
    let cfg = KernelConfig::new(1.0, 1).unwrap();
    let mut rng = stream(92, &[0]);
    let s = model::sample(&theta0, 40, &mut rng).unwrap();
    let mut spec = EstimatorSpec::min_ksd();
    spec.max_iterations = 120;
    let theta_hat = composite_ksd::estimate::estimate(&s, &cfg, &spec).unwrap();
    let a = draw_all(&s, &theta_hat, BootScheme::Corrected, 5, &cfg, &spec, 3).unwrap();
    let b = draw_all(&s, &theta_hat, BootScheme::Corrected, 5, &cfg, &spec, 3).unwrap();
    assert_eq!(a.values.len(), 5);
    for (x, y) in a.values.iter().zip(b.values.iter()) {
        assert_eq!(x.to_bits(), y.to_bits());
        assert!(x.is_finite());
    }
}

/// The default draws are the exact average of the two single-point gradient
/// variants, draw by draw.
#[test]
fn averaged_gradient_is_the_mean_of_the_two_variants() {
    use composite_ksd::bootstrap::{draw_all_with_gradients, CorrectionGradients};
    let theta0 = GaussianTheta::standard(1).unwrap();
    let cfg = KernelConfig::new(1.0, 1).unwrap();
    let mut rng = stream(93, &[0]);
    let s = model::sample(&theta0, 120, &mut rng).unwrap();
    let theta_hat = moment_estimator(&s).unwrap();
    let est = EstimatorSpec::moment();
    let averaged = draw_all(&s, &theta_hat, BootScheme::Corrected, 40, &cfg, &est, 9).unwrap();
    let mut single = |g: CorrectionGradients| {
        draw_all_with_gradients(&s, &theta_hat, BootScheme::Corrected, 40, &cfg, &est, 9, g)
            .unwrap()
    };
    let at_star = single(CorrectionGradients::AtThetaStar);
    let at_hat = single(CorrectionGradients::AtThetaHat);
    let mut any_diff = false;
    for i in 0..40 {
        let mean = 0.5 * (at_star.values[i] + at_hat.values[i]);
        assert!(
            (averaged.values[i] - mean).abs() < 1e-10,
            "draw {i}: {} vs mean of variants {}",
            averaged.values[i],
            mean
        );
        any_diff |= at_star.values[i] != at_hat.values[i];
    }
    assert!(any_diff, "variants should differ on resamples with θ* ≠ θ̂");
}

/// Resampling stays reproducible through the public draw-stream helper.
#[test]
fn draw_streams_reproduce_single_draws() {
    let mut a = draw_rng(17, 3, 0);
    let mut b = draw_rng(17, 3, 0);
    assert_eq!(
        resample_indices(25, &mut a).unwrap(),
        resample_indices(25, &mut b).unwrap()
    );
}
