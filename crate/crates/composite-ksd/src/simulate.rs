//! Monte Carlo studies: empirical level under the Gaussian null and power
//! under a two-component mixture alternative, with seeded parallel
//! replications and CSV output.
//!
//! Replications are the unit of parallelism. Every replication owns a stream
//! keyed by `(master seed, cell, replication)`, and aggregation is integer
//! counting, so results are identical for any worker count.

use crate::bootstrap::BootScheme;
use crate::error::{Error, Result};
use crate::estimate::EstimatorSpec;
use crate::kernel::KernelConfig;
use crate::model::{self, GaussianTheta};
use crate::rng::{derive_seed, stream};
use crate::sample::Sample;
use crate::testing::run_test;
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Stream-domain tag for study replications.
const DOMAIN_CELL: u64 = 0xCE11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    /// Data from the null model `N(0, I_d)`.
    Null,
    /// Data from the mixture `½N(−e₁μ, I_d) + ½N(+e₁μ, I_d)`.
    Power,
}

impl std::fmt::Display for StudyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Null => write!(f, "null"),
            Self::Power => write!(f, "power"),
        }
    }
}

/// Full description of a study grid.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub d: usize,
    pub n_grid: Vec<usize>,
    /// Monte Carlo replications per cell.
    pub reps: usize,
    /// Bootstrap draws per replication.
    pub b: usize,
    pub gamma: f64,
    pub c: f64,
    /// Mixture separation; used by power studies only.
    pub mu: f64,
    pub schemes: Vec<BootScheme>,
    pub estimator: EstimatorSpec,
    pub seed: u64,
    /// 0 = use the ambient thread pool.
    pub workers: usize,
}

impl StudyConfig {
    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps must be >= 1"));
        }
        if self.n_grid.is_empty() {
            return Err(Error::invalid("n grid must be non-empty"));
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::invalid("every n must be >= 2"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("at least one scheme is required"));
        }
        if self.mu < 0.0 {
            return Err(Error::invalid("mu must be >= 0"));
        }
        KernelConfig::new(self.c, self.d)?;
        Ok(())
    }
}

/// Aggregated outcome of one (scheme, n) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub study: StudyKind,
    pub scheme: BootScheme,
    pub d: usize,
    pub n: usize,
    pub mu: f64,
    pub c: f64,
    pub b: usize,
    pub gamma: f64,
    pub reps: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Binomial standard error `sqrt(rate·(1−rate)/R)`.
    pub se: f64,
    pub seconds_per_rep: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub cells: Vec<CellResult>,
}

/// Standard-normal sample in dimension d.
pub fn gen_null(d: usize, n: usize, rng: &mut ChaCha12Rng) -> Result<Sample> {
    let theta = GaussianTheta::standard(d)?;
    model::sample(&theta, n, rng)
}

/// Symmetric two-component Gaussian mixture `½N(−e₁μ, I_d) + ½N(+e₁μ, I_d)`:
/// per row a fair component choice, then a unit-covariance Gaussian draw.
/// The first coordinate has mean 0 and variance `1 + μ²`; for `μ > 0` the
/// law lies outside the Gaussian family.
pub fn gen_mixture(d: usize, n: usize, mu: f64, rng: &mut ChaCha12Rng) -> Result<Sample> {
    if mu < 0.0 {
        return Err(Error::invalid("mu must be >= 0"));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let shift = if rng.random::<bool>() { mu } else { -mu };
        let mut row = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        row[0] += shift;
        rows.push(row);
    }
    Sample::from_rows(rows)
}

/// Run every cell of the grid. Deterministic for a fixed config (including
/// the master seed), independent of the worker count; timing fields are the
/// only non-seeded output.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| run_study_inner(config))
    } else {
        run_study_inner(config)
    }
}

fn run_study_inner(config: &StudyConfig) -> Result<StudyResult> {
    let cfg = KernelConfig::new(config.c, config.d)?;
    let mut cells = Vec::new();
    for (si, &scheme) in config.schemes.iter().enumerate() {
        for (ni, &n) in config.n_grid.iter().enumerate() {
            let cell = (si * config.n_grid.len() + ni) as u64;
            let outcomes: Vec<(bool, f64)> = (0..config.reps)
                .into_par_iter()
                .map(|rep| -> Result<(bool, f64)> {
                    let started = Instant::now();
                    let mut data_rng =
                        stream(config.seed, &[DOMAIN_CELL, cell, rep as u64, 0]);
                    let sample = match config.study {
                        StudyKind::Null => gen_null(config.d, n, &mut data_rng)?,
                        StudyKind::Power => {
                            gen_mixture(config.d, n, config.mu, &mut data_rng)?
                        }
                    };
                    let boot_seed =
                        derive_seed(config.seed, &[DOMAIN_CELL, cell, rep as u64, 1]);
                    let result = run_test(
                        &sample,
                        &cfg,
                        &config.estimator,
                        config.b,
                        config.gamma,
                        boot_seed,
                        scheme,
                    )
                    .map_err(|e| {
                        Error::invalid(format!(
                            "cell scheme={scheme} n={n} replication {rep}: {e}"
                        ))
                    })?;
                    Ok((result.reject, started.elapsed().as_secs_f64()))
                })
                .collect::<Result<Vec<_>>>()?;
            let rejections = outcomes.iter().filter(|o| o.0).count();
            let rate = rejections as f64 / config.reps as f64;
            let seconds: f64 =
                outcomes.iter().map(|o| o.1).sum::<f64>() / config.reps as f64;
            cells.push(CellResult {
                study: config.study,
                scheme,
                d: config.d,
                n,
                mu: if config.study == StudyKind::Power {
                    config.mu
                } else {
                    0.0
                },
                c: config.c,
                b: config.b,
                gamma: config.gamma,
                reps: config.reps,
                rejections,
                rate,
                se: (rate * (1.0 - rate) / config.reps as f64).sqrt(),
                seconds_per_rep: seconds,
            });
        }
    }
    Ok(StudyResult { cells })
}

impl StudyResult {
    /// One row per cell. All columns except `seconds_per_rep` are pure
    /// functions of the study config and master seed.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("study,scheme,d,n,mu,c,B,gamma,R,rejections,rate,se,seconds_per_rep\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.3}\n",
                cell.study,
                cell.scheme,
                cell.d,
                cell.n,
                cell.mu,
                cell.c,
                cell.b,
                cell.gamma,
                cell.reps,
                cell.rejections,
                cell.rate,
                cell.se,
                cell.seconds_per_rep
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_generator_shape_and_moments() {
        let mut rng = stream(60, &[0]);
        let s = gen_null(4, 50, &mut rng).unwrap();
        assert_eq!(s.dim(), 4);
        assert_eq!(s.n(), 50);
        let mut r1 = stream(61, &[0]);
        let mut r2 = stream(61, &[0]);
        let a = gen_null(1, 20, &mut r1).unwrap();
        let b = gen_null(1, 20, &mut r2).unwrap();
        assert_eq!(a, b);

        let mut rng = stream(62, &[0]);
        let big = gen_null(1, 10_000, &mut rng).unwrap();
        let mean: f64 = (0..10_000).map(|i| big.row(i)[0]).sum::<f64>() / 1e4;
        let var: f64 = (0..10_000).map(|i| (big.row(i)[0] - mean).powi(2)).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.05);
        assert!((var - 1.0).abs() < 0.08);
    }

    #[test]
    fn mixture_moments_match_their_formulas() {
        // μ=0 coincides with the null generator in law; variance of the first
        // coordinate is 1+μ² in general; remaining coordinates stay standard.
        let mut rng = stream(63, &[0]);
        let s0 = gen_mixture(2, 10_000, 0.0, &mut rng).unwrap();
        let v0: f64 = {
            let m: f64 = (0..s0.n()).map(|i| s0.row(i)[0]).sum::<f64>() / 1e4;
            (0..s0.n()).map(|i| (s0.row(i)[0] - m).powi(2)).sum::<f64>() / 1e4
        };
        assert!((v0 - 1.0).abs() < 0.08, "variance at mu=0: {v0}");

        let mut rng = stream(64, &[0]);
        let s2 = gen_mixture(2, 10_000, 2.0, &mut rng).unwrap();
        let m0: f64 = (0..s2.n()).map(|i| s2.row(i)[0]).sum::<f64>() / 1e4;
        let v1: f64 = (0..s2.n()).map(|i| (s2.row(i)[0] - m0).powi(2)).sum::<f64>() / 1e4;
        // Var = 1 + μ² = 5; SE of the sample variance of the mixture ≈ 0.1
        assert!((v1 - 5.0).abs() < 0.3, "first-coordinate variance {v1}");
        let m1: f64 = (0..s2.n()).map(|i| s2.row(i)[1]).sum::<f64>() / 1e4;
        let v2: f64 = (0..s2.n()).map(|i| (s2.row(i)[1] - m1).powi(2)).sum::<f64>() / 1e4;
        assert!((v2 - 1.0).abs() < 0.08, "second-coordinate variance {v2}");
        assert!(gen_mixture(1, 10, -0.5, &mut rng).is_err());
    }

    #[test]
    fn single_replication_matches_run_test() {
        let config = StudyConfig {
            study: StudyKind::Null,
            d: 1,
            n_grid: vec![25],
            reps: 1,
            b: 10,
            gamma: 0.05,
            c: 1.0,
            mu: 0.0,
            schemes: vec![BootScheme::Corrected],
            estimator: EstimatorSpec::moment(),
            seed: 42,
            workers: 0,
        };
        let result = run_study(&config).unwrap();
        assert_eq!(result.cells.len(), 1);
        let mut data_rng = stream(42, &[DOMAIN_CELL, 0, 0, 0]);
        let sample = gen_null(1, 25, &mut data_rng).unwrap();
        let boot_seed = derive_seed(42, &[DOMAIN_CELL, 0, 0, 1]);
        let cfg = KernelConfig::new(1.0, 1).unwrap();
        let direct = run_test(
            &sample,
            &cfg,
            &EstimatorSpec::moment(),
            10,
            0.05,
            boot_seed,
            BootScheme::Corrected,
        )
        .unwrap();
        assert_eq!(result.cells[0].rejections, usize::from(direct.reject));
    }

    #[test]
    fn study_is_worker_count_invariant() {
        let base = StudyConfig {
            study: StudyKind::Null,
            d: 1,
            n_grid: vec![20, 30],
            reps: 6,
            b: 8,
            gamma: 0.1,
            c: 1.0,
            mu: 0.0,
            schemes: vec![BootScheme::Corrected, BootScheme::Wild],
            estimator: EstimatorSpec::moment(),
            seed: 7,
            workers: 1,
        };
        let one = run_study(&base).unwrap();
        let four = run_study(&StudyConfig {
            workers: 4,
            ..base.clone()
        })
        .unwrap();
        let strip = |csv: &str| {
            csv.lines()
                .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_owned()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&one.to_csv()), strip(&four.to_csv()));
    }
}
