//! Command-line interface: `test`, `simulate-null`, `simulate-power` and
//! `selfcheck`.
//!
//! Exit codes for `test`: 0 = accept, 1 = reject, 2 = error. The simulate
//! commands exit 0 on completion and 2 on error; `selfcheck` exits 1 when an
//! invariant suite fails.

use crate::bootstrap::BootScheme;
use crate::error::{Error, Result};
use crate::estimate::{EstimatorKind, EstimatorSpec};
use crate::kernel::KernelConfig;
use crate::sample::Sample;
use crate::simulate::{run_study, StudyConfig, StudyKind};
use crate::svg::study_chart;
use crate::testing::run_test;
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "composite-ksd",
    version,
    about = "Composite goodness-of-fit testing with the kernel Stein discrepancy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether a CSV sample fits the Gaussian family.
    Test(TestArgs),
    /// Empirical level study under the Gaussian null.
    SimulateNull(SimArgs),
    /// Empirical power study under the mixture alternative.
    SimulatePower(SimArgs),
    /// Run the built-in numerical invariant suites.
    Selfcheck(SelfcheckArgs),
}

fn parse_scheme(s: &str) -> std::result::Result<BootScheme, String> {
    BootScheme::from_str(s).map_err(|e| e.to_string())
}

fn parse_estimator(s: &str) -> std::result::Result<EstimatorKind, String> {
    EstimatorKind::from_str(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV: n rows × d numeric columns, comma-separated, optional header.
    #[arg(long)]
    data: PathBuf,
    /// Write the JSON/CSV result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of bootstrap draws.
    #[arg(long, default_value_t = 200)]
    b: usize,
    /// Test size (rejection level).
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    /// Kernel bandwidth constant; the bandwidth is c·√d.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value = "corrected", value_parser = parse_scheme)]
    scheme: BootScheme,
    #[arg(long, default_value = "moment", value_parser = parse_estimator)]
    estimator: EstimatorKind,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output format: json | csv.
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct SimArgs {
    /// Data dimension.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Sample sizes, comma separated (e.g. --n 100,200,300).
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Monte Carlo replications per cell.
    #[arg(long, default_value_t = 300)]
    reps: usize,
    /// Number of bootstrap draws per replication.
    #[arg(long, default_value_t = 200)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    /// Kernel bandwidth constant (default 0.2 for the null study, 1.0 for
    /// the power study).
    #[arg(long)]
    c: Option<f64>,
    /// Mixture separation (power study only).
    #[arg(long, default_value_t = 2.0)]
    mu: f64,
    /// Schemes to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "corrected", value_parser = parse_scheme)]
    scheme: Vec<BootScheme>,
    #[arg(long, default_value = "moment", value_parser = parse_estimator)]
    estimator: EstimatorKind,
    /// Master seed (required: studies must be reproducible).
    #[arg(long)]
    seed: u64,
    /// Write the CSV/JSON table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG line chart (rate vs n per scheme).
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output format: csv | json.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parse a numeric CSV file. The first non-empty line may be a header; any
/// other unparsable or non-finite cell is an error naming its row and column
/// (1-based file coordinates).
pub fn load_csv(path: &Path) -> Result<Sample> {
    let content = std::fs::read_to_string(path)?;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut first_content_line = true;
    for (idx, line) in content.lines().enumerate() {
        let row_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let mut values = Vec::with_capacity(fields.len());
        let mut parse_failure: Option<(usize, String)> = None;
        for (col, field) in fields.iter().enumerate() {
            match field.trim().parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) => {
                    parse_failure = Some((col + 1, field.trim().to_string()));
                    break;
                }
            }
        }
        if let Some((column, field)) = parse_failure {
            if first_content_line {
                // header row
                first_content_line = false;
                continue;
            }
            return Err(Error::Data {
                row: row_no,
                column,
                reason: format!("cannot parse '{field}' as a number"),
            });
        }
        first_content_line = false;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                row: row_no,
                column: pos + 1,
                reason: "non-finite value".into(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Data {
                    row: row_no,
                    column: values.len(),
                    reason: format!("expected {w} columns"),
                });
            }
            _ => {}
        }
        rows.push(DVector::from_vec(values));
    }
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 data rows, found {}",
            rows.len()
        )));
    }
    Sample::from_rows(rows)
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn with_pool<T: Send>(workers: usize, run: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    }
}

fn cmd_test(args: &TestArgs) -> Result<i32> {
    let sample = load_csv(&args.data)?;
    let cfg = KernelConfig::new(args.c, sample.dim())?;
    let mut est = EstimatorSpec::moment();
    est.kind = args.estimator;
    let result = with_pool(args.workers, || {
        run_test(
            &sample,
            &cfg,
            &est,
            args.b,
            args.gamma,
            args.seed,
            args.scheme,
        )
    })?;
    let rendered = match args.format.as_str() {
        "json" => {
            let mut s = serde_json::to_string_pretty(&result)
                .map_err(|e| Error::invalid(format!("serialization: {e}")))?;
            s.push('\n');
            s
        }
        "csv" => {
            let mut s = String::from(
                "schema,statistic,quantile,p_value,reject,n,d,b,gamma,seed,c,scheme,estimator,bootstrap_rejections\n",
            );
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                result.schema,
                result.statistic,
                result.quantile,
                result.p_value,
                result.reject,
                result.n,
                result.d,
                result.b,
                result.gamma,
                result.seed,
                result.c,
                result.scheme,
                result.estimator,
                result.bootstrap_rejections
            ));
            s
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown format '{other}' (expected json | csv)"
            )))
        }
    };
    write_or_print(&args.out, &rendered)?;
    Ok(if result.reject { 1 } else { 0 })
}

fn cmd_simulate(study: StudyKind, args: &SimArgs) -> Result<i32> {
    let c = args.c.unwrap_or(match study {
        StudyKind::Null => 0.2,
        StudyKind::Power => 1.0,
    });
    let mut est = EstimatorSpec::moment();
    est.kind = args.estimator;
    let config = StudyConfig {
        study,
        d: args.d,
        n_grid: args.n.clone(),
        reps: args.reps,
        b: args.b,
        gamma: args.gamma,
        c,
        mu: match study {
            StudyKind::Power => args.mu,
            StudyKind::Null => 0.0,
        },
        schemes: args.scheme.clone(),
        estimator: est,
        seed: args.seed,
        workers: args.workers,
    };
    let result = run_study(&config)?;
    let rendered = match args.format.as_str() {
        "csv" => result.to_csv(),
        "json" => {
            let mut s = serde_json::to_string_pretty(&result)
                .map_err(|e| Error::invalid(format!("serialization: {e}")))?;
            s.push('\n');
            s
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown format '{other}' (expected csv | json)"
            )))
        }
    };
    write_or_print(&args.out, &rendered)?;
    if let Some(svg_path) = &args.svg {
        let title = format!("{study} study, d={}, gamma={}", args.d, args.gamma);
        std::fs::write(svg_path, study_chart(&result, args.gamma, &title))?;
    }
    Ok(0)
}

fn cmd_selfcheck(args: &SelfcheckArgs) -> Result<i32> {
    let reports = crate::diagnostics::run_all(args.seed)?;
    let mut failed = false;
    for report in &reports {
        println!("{report}");
        failed |= !report.passed();
    }
    Ok(if failed { 1 } else { 0 })
}

/// Entry point returning the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Test(args) => cmd_test(args),
        Command::SimulateNull(args) => cmd_simulate(StudyKind::Null, args),
        Command::SimulatePower(args) => cmd_simulate(StudyKind::Power, args),
        Command::Selfcheck(args) => cmd_selfcheck(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
