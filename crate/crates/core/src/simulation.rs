//! Synthetic data generation and the Monte Carlo harness that compares the
//! infeasible full-data fit, the naive complete-case fit, and the corrected
//! fit over independent replications.
//!
//! Reproducibility contract: every random quantity comes from a ChaCha8
//! stream addressed by `(seed, stream)`. Replicate `i` draws its dataset from
//! stream `i`, one uniform per variate in a fixed order (covariates left to
//! right, then the outcome, then the observation indicator), so a report is a
//! pure function of the config regardless of how many worker threads run the
//! replications.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::correction::{BranchRule, CorrectionOptions, fit_corrected};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm;
use crate::math::expit;
use crate::oracle::{CovariateLaw, TruthSpec};
use crate::smoother::SmootherKind;

/// Everything a Monte Carlo run needs: the generating process, the sample
/// size per replication, the replication count, and how the corrected
/// estimator is configured inside each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub truth: TruthSpec,
    pub n: usize,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub smoother_kind: SmootherKind,
    #[serde(default)]
    pub branch: BranchRule,
    #[serde(default)]
    pub bootstrap_reps: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        if self.n < 50 {
            return Err(Error::Input(format!(
                "sample size {} is below the supported minimum of 50",
                self.n
            )));
        }
        if self.replications == 0 {
            return Err(Error::Input("at least one replication is required".into()));
        }
        Ok(())
    }
}

/// Aggregate over the successful replications of one estimator.
///
/// `sd` is the uncorrected (divide by m) replicate standard deviation and
/// `rmse` the root mean squared error around the truth, so
/// `rmse^2 = bias^2 + sd^2` up to floating-point error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub n_success: usize,
    /// Failure tallies keyed by the machine-readable error kind.
    pub failures: BTreeMap<String, usize>,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    pub sd: Vec<f64>,
    pub rmse: Vec<f64>,
}

/// Result of a Monte Carlo run: per-coefficient summaries for the three
/// estimators plus run-level diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub coef_names: Vec<String>,
    pub replications: usize,
    pub full_data: EstimatorSummary,
    pub naive: EstimatorSummary,
    pub corrected: EstimatorSummary,
    pub mean_observed_fraction: f64,
    /// Mean diagnostic over successful corrected replications.
    pub mean_approx_quality: f64,
    /// Distinct warnings surfaced by the corrected estimator, deduplicated.
    pub warnings: Vec<String>,
}

/// Draw a dataset from the generating process. Returns the dataset with the
/// outcome masked wherever the observation indicator came up 0, together
/// with the unmasked outcome vector for the infeasible benchmark fit.
pub fn generate_dataset(truth: &TruthSpec, n: usize, seed: u64) -> Result<(Dataset, Array1<f64>)> {
    generate_dataset_stream(truth, n, seed, 0)
}

/// As [`generate_dataset`] but on an explicit RNG stream, so replications can
/// share one seed without sharing any draws.
pub fn generate_dataset_stream(
    truth: &TruthSpec,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<(Dataset, Array1<f64>)> {
    truth.validate()?;
    if n == 0 {
        return Err(Error::Input("cannot generate an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let p = truth.p();
    let beta_x = Array1::from(truth.beta_x.clone());
    let delta_x = Array1::from(truth.delta_x.clone());
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal is well formed");

    let mut x = Array2::zeros((n, p));
    let mut y: Vec<Option<u8>> = Vec::with_capacity(n);
    let mut full_y = Array1::zeros(n);
    for i in 0..n {
        for (j, law) in truth.covariates.iter().enumerate() {
            let u: f64 = rng.random();
            x[[i, j]] = match law {
                // random() never returns 1.0, but it can return 0.0, where
                // the normal quantile would be -inf; nudge to the smallest
                // positive double instead.
                CovariateLaw::StandardNormal => std_normal.inverse_cdf(u.max(f64::MIN_POSITIVE)),
                CovariateLaw::Bernoulli { p } => f64::from(u > 1.0 - p),
                CovariateLaw::Uniform { low, high } => low + (high - low) * u,
            };
        }
        let eta_y = truth.beta0 + x.row(i).dot(&beta_x);
        let yi = u8::from(rng.random::<f64>() > 1.0 - expit(eta_y));
        let eta_s = truth.delta0 + x.row(i).dot(&delta_x) + truth.delta_y * f64::from(yi);
        let si = rng.random::<f64>() > 1.0 - expit(eta_s);
        full_y[i] = f64::from(yi);
        y.push(si.then_some(yi));
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let d = Dataset::new(x, y, names)?;
    Ok((d, full_y))
}

/// What one replication produces before aggregation.
struct Replicate {
    observed_fraction: f64,
    full_data: Result<Vec<f64>>,
    naive: Result<Vec<f64>>,
    corrected: Result<CorrectedPoint>,
}

struct CorrectedPoint {
    coef: Vec<f64>,
    approx_quality: f64,
    warnings: Vec<String>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_replicate(cfg: &SimConfig, index: usize) -> Result<Replicate> {
    let (d, full_y) = generate_dataset_stream(&cfg.truth, cfg.n, cfg.seed, index as u64)?;
    let observed = d.y().iter().filter(|v| v.is_some()).count();
    let observed_fraction = observed as f64 / cfg.n as f64;

    let full_data =
        glm::fit(&d.design_full(), &full_y, None, None).map(|fit| fit.coef.to_vec());

    let naive = d.observed_subsample().and_then(|sub| {
        glm::fit(&sub.design_full(), &sub.observed_outcomes(), None, None)
            .map(|fit| fit.coef.to_vec())
    });

    let opts = CorrectionOptions {
        smoother: cfg.smoother_kind,
        branch: cfg.branch,
        bootstrap_reps: cfg.bootstrap_reps,
        // Decorrelate the bootstrap streams from the data-generation streams
        // (which use the raw seed) by hashing the replicate index.
        seed: splitmix64(cfg.seed ^ (index as u64 + 1)),
        truth: Some(cfg.truth.clone()),
    };
    let corrected = fit_corrected(&d, &opts).map(|est| CorrectedPoint {
        coef: est.fit.coef.to_vec(),
        approx_quality: est.approx_quality,
        warnings: est.warnings,
    });

    Ok(Replicate { observed_fraction, full_data, naive, corrected })
}

fn summarize(points: &[&[f64]], failures: BTreeMap<String, usize>, truth: &[f64]) -> EstimatorSummary {
    let k = truth.len();
    let m = points.len();
    if m == 0 {
        return EstimatorSummary {
            n_success: 0,
            failures,
            mean: vec![f64::NAN; k],
            bias: vec![f64::NAN; k],
            sd: vec![f64::NAN; k],
            rmse: vec![f64::NAN; k],
        };
    }
    let mut mean = vec![0.0; k];
    for coef in points {
        for j in 0..k {
            mean[j] += coef[j];
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let mut sd = vec![0.0; k];
    let mut rmse = vec![0.0; k];
    for coef in points {
        for j in 0..k {
            sd[j] += (coef[j] - mean[j]).powi(2);
            rmse[j] += (coef[j] - truth[j]).powi(2);
        }
    }
    for j in 0..k {
        sd[j] = (sd[j] / m as f64).sqrt();
        rmse[j] = (rmse[j] / m as f64).sqrt();
    }
    let bias = (0..k).map(|j| mean[j] - truth[j]).collect();
    EstimatorSummary { n_success: m, failures, mean, bias, sd, rmse }
}

/// Run the full study: `cfg.replications` independent replications, each
/// fitting the three estimators, aggregated in replicate order.
///
/// Replications are run in parallel; a replication whose estimator fails is
/// tallied under that estimator's failure counts and excluded from its
/// aggregates. More than half of the corrected fits failing is a run-level
/// error rather than a report.
pub fn run_monte_carlo(cfg: &SimConfig) -> Result<McReport> {
    cfg.validate()?;
    let replicates: Vec<Result<Replicate>> =
        (0..cfg.replications).into_par_iter().map(|i| run_replicate(cfg, i)).collect();

    let truth: Vec<f64> =
        std::iter::once(cfg.truth.beta0).chain(cfg.truth.beta_x.iter().copied()).collect();
    let coef_names: Vec<String> = std::iter::once("(intercept)".to_string())
        .chain((1..=cfg.truth.p()).map(|j| format!("x{j}")))
        .collect();

    let mut full_points: Vec<&[f64]> = Vec::new();
    let mut naive_points: Vec<&[f64]> = Vec::new();
    let mut corrected_points: Vec<&[f64]> = Vec::new();
    let mut full_failures = BTreeMap::new();
    let mut naive_failures = BTreeMap::new();
    let mut corrected_failures = BTreeMap::new();
    let mut observed_fraction_sum = 0.0;
    let mut observed_fraction_count = 0usize;
    let mut approx_quality_sum = 0.0;
    let mut warnings = BTreeSet::new();

    let tally = |map: &mut BTreeMap<String, usize>, err: &Error| {
        *map.entry(err.kind().to_string()).or_insert(0) += 1;
    };
    for rep in &replicates {
        match rep {
            Ok(rep) => {
                observed_fraction_sum += rep.observed_fraction;
                observed_fraction_count += 1;
                match &rep.full_data {
                    Ok(coef) => full_points.push(coef),
                    Err(e) => tally(&mut full_failures, e),
                }
                match &rep.naive {
                    Ok(coef) => naive_points.push(coef),
                    Err(e) => tally(&mut naive_failures, e),
                }
                match &rep.corrected {
                    Ok(point) => {
                        corrected_points.push(&point.coef);
                        approx_quality_sum += point.approx_quality;
                        warnings.extend(point.warnings.iter().cloned());
                    }
                    Err(e) => tally(&mut corrected_failures, e),
                }
            }
            // Data generation itself failed; count it against every
            // estimator since none of them got to run.
            Err(e) => {
                tally(&mut full_failures, e);
                tally(&mut naive_failures, e);
                tally(&mut corrected_failures, e);
            }
        }
    }

    let n_corrected_failed = cfg.replications - corrected_points.len();
    if 2 * n_corrected_failed > cfg.replications {
        return Err(Error::McFailure(format!(
            "{n_corrected_failed} of {} corrected fits failed ({:?})",
            cfg.replications, corrected_failures
        )));
    }

    let n_corrected = corrected_points.len();
    Ok(McReport {
        coef_names,
        replications: cfg.replications,
        full_data: summarize(&full_points, full_failures, &truth),
        naive: summarize(&naive_points, naive_failures, &truth),
        corrected: summarize(&corrected_points, corrected_failures, &truth),
        mean_observed_fraction: observed_fraction_sum / observed_fraction_count.max(1) as f64,
        mean_approx_quality: approx_quality_sum / n_corrected.max(1) as f64,
        warnings: warnings.into_iter().collect(),
    })
}
