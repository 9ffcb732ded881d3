//! Command-line front end: fit a corrected model to a CSV file, run Monte
//! Carlo studies from a config file, generate synthetic datasets, and check
//! the exact identities against the enumeration oracle.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use selogit::correction::{Branch, BranchRule, CorrectionOptions, fit_corrected};
use selogit::data::Dataset;
use selogit::error::Error;
use selogit::io::{read_table, write_dataset};
use selogit::oracle::{CovariateLaw, TruthSpec};
use selogit::simulation::{McReport, SimConfig, generate_dataset, run_monte_carlo};
use selogit::smoother::SmootherKind;
use selogit::verify::{GridSpec, run_identity_grid};
use selogit::glm;

#[derive(Parser)]
#[command(
    name = "selogit",
    about = "Logistic regression with a correction for outcome-dependent missingness",
    version
)]
struct Cli {
    /// Cap the number of worker threads used for replications/bootstrap.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the corrected outcome model to a CSV dataset.
    Fit(FitArgs),
    /// Run a Monte Carlo study described by a TOML config file.
    Simulate(SimulateArgs),
    /// Generate a synthetic dataset from the data-generating process.
    Dgp(DgpArgs),
    /// Check the exact log-relative-risk identities over a parameter grid.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with a header row; missing outcomes are empty cells (or NA).
    data: PathBuf,
    /// Name of the outcome column.
    #[arg(long, default_value = "y")]
    outcome: String,
    /// Covariate columns (comma separated). Default: every column except the
    /// outcome and the generator bookkeeping columns `s` and `y_full`.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Columns to force into linear (non-smoothed) terms in the first stage.
    #[arg(long, value_delimiter = ',')]
    linear: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "spline-gam")]
    smoother: SmootherChoice,
    #[arg(long, value_enum, default_value = "auto")]
    branch: BranchChoice,
    /// Number of bootstrap replicates for standard errors (0 = plug-in only).
    #[arg(long, default_value_t = 0)]
    bootstrap_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the full report as JSON to this path.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML config file (see README for the schema).
    config: PathBuf,
    /// Write the report as JSON to this path.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DgpArgs {
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    beta0: f64,
    /// Outcome slopes (comma separated); length sets the covariate count.
    #[arg(long, value_delimiter = ',', default_value = "1.0", allow_hyphen_values = true)]
    beta_x: Vec<f64>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    delta0: f64,
    /// Observation-model slopes (comma separated, same length as beta-x).
    #[arg(long, value_delimiter = ',', default_value = "-0.5", allow_hyphen_values = true)]
    delta_x: Vec<f64>,
    /// Effect of the outcome itself on being observed.
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    delta_y: f64,
    /// Covariate laws: standard-normal, bernoulli:P, or uniform:LOW:HIGH
    /// (comma separated). Default: standard-normal for every covariate.
    #[arg(long, value_delimiter = ',')]
    laws: Option<Vec<String>>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the unmasked outcome as a y_full column.
    #[arg(long)]
    include_full_y: bool,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Maximum residual accepted as a pass.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Override the default grid values (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta_x: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta_x: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta_y: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    /// Write the report as JSON to this path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Deliberately corrupt one identity to prove failures are detected.
    #[arg(long, hide = true)]
    inject_sign_error: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SmootherChoice {
    SplineGam,
    ParametricLogit,
}

impl From<SmootherChoice> for SmootherKind {
    fn from(c: SmootherChoice) -> Self {
        match c {
            SmootherChoice::SplineGam => SmootherKind::SplineGam,
            SmootherChoice::ParametricLogit => SmootherKind::ParametricLogit,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum BranchChoice {
    Auto,
    Rare,
    Frequent,
}

impl From<BranchChoice> for BranchRule {
    fn from(c: BranchChoice) -> Self {
        match c {
            BranchChoice::Auto => BranchRule::Auto,
            BranchChoice::Rare => BranchRule::Rare,
            BranchChoice::Frequent => BranchRule::Frequent,
        }
    }
}

/// Structured output of `fit`.
#[derive(Serialize)]
struct FitReport {
    corrected: CoefBlock,
    naive: CoefBlock,
    /// Absent when the dataset had no missing outcomes.
    delta: Option<DeltaBlock>,
    approx_quality: Option<f64>,
    pi_summary: Option<PiBlock>,
    bootstrap: Option<BootstrapBlock>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct CoefBlock {
    labels: Vec<String>,
    coef: Vec<f64>,
    /// Plug-in standard errors from the final-stage information matrix.
    se: Vec<f64>,
}

#[derive(Serialize)]
struct DeltaBlock {
    delta0: f64,
    delta_x: Vec<f64>,
    delta_y: f64,
    branch: Branch,
    gamma_hat: f64,
}

#[derive(Serialize)]
struct PiBlock {
    kind: SmootherKind,
    min: f64,
    median: f64,
    max: f64,
    clip_count: usize,
    effective_dof: f64,
}

#[derive(Serialize)]
struct BootstrapBlock {
    se: Vec<f64>,
    n_success: usize,
    failures: BTreeMap<String, usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore the error from double initialization; first caller wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Dgp(args) => cmd_dgp(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// Stable mapping from failure kinds to process exit codes.
fn exit_code_for(err: &Error) -> u8 {
    match err.kind() {
        "identification" => 2,
        "input" | "degenerate-data" | "singular-design" => 3,
        _ => 4,
    }
}

fn read_to_string(path: &PathBuf) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {path:?}: {e}")))
}

fn write_output(path: &PathBuf, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Input(format!("cannot write {path:?}: {e}")))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("report serialization failed: {e}")))
}

fn cmd_fit(args: FitArgs) -> Result<ExitCode, Error> {
    let (headers, rows) = read_table(&args.data)?;
    let covariates: Vec<String> = match &args.covariates {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .filter(|h| **h != args.outcome && h.as_str() != "s" && h.as_str() != "y_full")
            .cloned()
            .collect(),
    };
    let mut d = Dataset::from_records(&headers, &rows, &args.outcome, &covariates)?;
    if let Some(linear) = &args.linear {
        d = d.with_linear_columns(linear)?;
    }

    let report;
    if d.n_observed() == d.n() {
        // Nothing is missing: the correction machinery has no selection
        // model to estimate, so report the plain fit under both headings.
        let fit = glm::fit(&d.design_full(), &d.observed_outcomes(), None, None)?;
        let block = coef_block(&fit);
        report = FitReport {
            corrected: coef_block(&fit),
            naive: block,
            delta: None,
            approx_quality: None,
            pi_summary: None,
            bootstrap: None,
            warnings: vec!["no missingness detected: corrected fit equals the naive fit".into()],
        };
    } else {
        let opts = CorrectionOptions {
            smoother: args.smoother.into(),
            branch: args.branch.into(),
            bootstrap_reps: args.bootstrap_reps,
            seed: args.seed,
            truth: None,
        };
        let est = fit_corrected(&d, &opts)?;
        let mut pi_sorted: Vec<f64> = est.pi.values.iter().copied().collect();
        pi_sorted.sort_by(f64::total_cmp);
        report = FitReport {
            corrected: coef_block(&est.fit),
            naive: coef_block(&est.naive_fit),
            delta: Some(DeltaBlock {
                delta0: est.delta.params.delta0,
                delta_x: est.delta.params.delta_x.clone(),
                delta_y: est.delta.params.delta_y,
                branch: est.delta.branch,
                gamma_hat: est.delta.gamma_hat,
            }),
            approx_quality: Some(est.approx_quality),
            pi_summary: Some(PiBlock {
                kind: est.pi.kind,
                min: pi_sorted[0],
                median: pi_sorted[pi_sorted.len() / 2],
                max: pi_sorted[pi_sorted.len() - 1],
                clip_count: est.pi.clip_count,
                effective_dof: est.pi.effective_dof,
            }),
            bootstrap: est.bootstrap.as_ref().map(|b| BootstrapBlock {
                se: b.se.clone(),
                n_success: b.n_success,
                failures: b.failures.clone(),
            }),
            warnings: est.warnings.clone(),
        };
    }

    print_fit_report(&report);
    if let Some(path) = &args.output {
        write_output(path, &to_json(&report)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn coef_block(fit: &glm::LogisticFit) -> CoefBlock {
    CoefBlock { labels: fit.labels.clone(), coef: fit.coef.to_vec(), se: fit.se() }
}

fn print_fit_report(report: &FitReport) {
    println!("{:<16} {:>12} {:>10} {:>12} {:>10}", "coefficient", "corrected", "se", "naive", "se");
    for j in 0..report.corrected.coef.len() {
        println!(
            "{:<16} {:>12.6} {:>10.4} {:>12.6} {:>10.4}",
            report.corrected.labels[j],
            report.corrected.coef[j],
            report.corrected.se[j],
            report.naive.coef[j],
            report.naive.se[j],
        );
    }
    if let Some(delta) = &report.delta {
        let dx = delta.delta_x.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ");
        println!(
            "\nobservation model: delta0 = {:.4}, delta_x = [{dx}], delta_y = {:.4} \
             ({:?} branch, gamma_hat = {:.4})",
            delta.delta0, delta.delta_y, delta.branch, delta.gamma_hat
        );
    }
    if let Some(q) = report.approx_quality {
        println!("approximation quality statistic: {q:.4}");
    }
    if let Some(pi) = &report.pi_summary {
        println!(
            "pi-hat ({:?}): min {:.4}, median {:.4}, max {:.4}, clipped {}, edf {:.2}",
            pi.kind, pi.min, pi.median, pi.max, pi.clip_count, pi.effective_dof
        );
    }
    if let Some(boot) = &report.bootstrap {
        let se = boot.se.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ");
        println!("bootstrap se: [{se}] from {} replicates", boot.n_success);
        if !boot.failures.is_empty() {
            println!("bootstrap failures: {:?}", boot.failures);
        }
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    let text = read_to_string(&args.config)?;
    let cfg: SimConfig =
        toml::from_str(&text).map_err(|e| Error::Input(format!("bad config: {e}")))?;
    cfg.validate()?;
    let report = run_monte_carlo(&cfg)?;
    print_mc_report(&report);
    if let Some(path) = &args.output {
        write_output(path, &to_json(&report)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn print_mc_report(report: &McReport) {
    println!(
        "{} replications, mean observed fraction {:.3}, mean approx quality {:.3}",
        report.replications, report.mean_observed_fraction, report.mean_approx_quality
    );
    for (name, est) in [
        ("full-data", &report.full_data),
        ("naive", &report.naive),
        ("corrected", &report.corrected),
    ] {
        println!("\n[{name}] {} of {} fits succeeded", est.n_success, report.replications);
        if !est.failures.is_empty() {
            println!("  failures: {:?}", est.failures);
        }
        println!(
            "  {:<14} {:>10} {:>10} {:>10} {:>10}",
            "coefficient", "mean", "bias", "sd", "rmse"
        );
        for j in 0..report.coef_names.len() {
            println!(
                "  {:<14} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                report.coef_names[j], est.mean[j], est.bias[j], est.sd[j], est.rmse[j]
            );
        }
    }
    // Warnings carry replicate-specific values, so long runs can accumulate
    // many distinct strings; keep the console readable and the JSON complete.
    const MAX_SHOWN: usize = 8;
    for w in report.warnings.iter().take(MAX_SHOWN) {
        println!("warning: {w}");
    }
    if report.warnings.len() > MAX_SHOWN {
        println!("... and {} more warnings (see the JSON report)", report.warnings.len() - MAX_SHOWN);
    }
}

fn parse_law(text: &str) -> Result<CovariateLaw, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["standard-normal"] => Ok(CovariateLaw::StandardNormal),
        ["bernoulli", p] => {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::Input(format!("bad bernoulli probability '{p}'")))?;
            Ok(CovariateLaw::Bernoulli { p })
        }
        ["uniform", low, high] => {
            let low: f64 =
                low.parse().map_err(|_| Error::Input(format!("bad uniform bound '{low}'")))?;
            let high: f64 =
                high.parse().map_err(|_| Error::Input(format!("bad uniform bound '{high}'")))?;
            Ok(CovariateLaw::Uniform { low, high })
        }
        _ => Err(Error::Input(format!(
            "unknown covariate law '{text}' (expected standard-normal, bernoulli:P, or uniform:LOW:HIGH)"
        ))),
    }
}

fn cmd_dgp(args: DgpArgs) -> Result<ExitCode, Error> {
    let p = args.beta_x.len();
    let laws = match &args.laws {
        Some(items) => items.iter().map(|t| parse_law(t)).collect::<Result<Vec<_>, _>>()?,
        None => vec![CovariateLaw::StandardNormal; p],
    };
    let truth = TruthSpec {
        beta0: args.beta0,
        beta_x: args.beta_x.clone(),
        delta0: args.delta0,
        delta_x: args.delta_x.clone(),
        delta_y: args.delta_y,
        covariates: laws,
    };
    let (d, full_y) = generate_dataset(&truth, args.n, args.seed)?;
    let full: Vec<u8> = full_y.iter().map(|&v| v as u8).collect();
    let full_arg = args.include_full_y.then_some(full.as_slice());
    match &args.output {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| Error::Input(format!("cannot create {path:?}: {e}")))?;
            write_dataset(file, &d, full_arg)?;
            let observed = d.n_observed();
            println!(
                "wrote {} rows ({observed} observed outcomes, {:.1}% missing) to {}",
                d.n(),
                100.0 * (d.n() - observed) as f64 / d.n() as f64,
                path.display()
            );
        }
        None => {
            let mut buf = Vec::new();
            write_dataset(&mut buf, &d, full_arg)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Error> {
    let defaults = GridSpec::default();
    let spec = GridSpec {
        beta0: args.beta0.unwrap_or(defaults.beta0),
        beta_x: args.beta_x.unwrap_or(defaults.beta_x),
        delta0: args.delta0.unwrap_or(defaults.delta0),
        delta_x: args.delta_x.unwrap_or(defaults.delta_x),
        delta_y: args.delta_y.unwrap_or(defaults.delta_y),
        x: args.x.unwrap_or(defaults.x),
        tol: args.tol,
        negate_exact_identity: args.inject_sign_error,
    };
    let report = run_identity_grid(&spec)?;
    println!("{} grid points, tolerance {:.1e}", report.n_points, report.tol);
    for check in &report.checks {
        println!(
            "{} {:<44} max residual {:.3e}{}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.max_residual,
            if check.pass {
                String::new()
            } else {
                format!(" ({} of {} points)", check.n_failures, report.n_points)
            }
        );
    }
    if let Some(path) = &args.output {
        write_output(path, &to_json(&report)?)?;
    }
    Ok(if report.all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
