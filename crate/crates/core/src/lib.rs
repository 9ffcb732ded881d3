//! Two-stage correction for logistic regression when the binary outcome is
//! missing as a function of itself.
//!
//! The pipeline: smooth the observed-subsample outcome probability, recover
//! the observation model (including the outcome's own effect on missingness)
//! from the marginal observation frequencies, then refit the outcome model
//! with the implied per-row offset. Exact enumeration oracles and a Monte
//! Carlo harness live alongside the estimator so every algebraic step is
//! checkable against ground truth.

pub mod correction;
pub mod data;
pub mod error;
pub mod glm;
pub mod io;
pub mod math;
pub mod oracle;
pub mod simulation;
pub mod smoother;
pub mod verify;

mod basis;
mod linalg;

pub use correction::{
    fit_corrected, fit_marginal_selection, fit_outcome_given_delta, log_rr_s_given_y,
    log_rr_y_given_s_approx, log_rr_y_given_s_exact, Branch, BranchRule, CorrectedEstimate,
    CorrectionOptions, DeltaEstimate, DeltaParams, OutcomeLevel,
};
pub use data::{ColumnKind, Dataset, DesignMatrix};
pub use error::{Error, Result};
pub use glm::{fit, predict_prob, LogisticFit};
pub use oracle::{conditional_table, direct_search_mle, ConditionalTable, CovariateLaw, TruthSpec};
pub use simulation::{
    generate_dataset, run_monte_carlo, EstimatorSummary, McReport, SimConfig,
};
pub use smoother::{fit_pi_hat, PiHat, SmootherKind};
pub use verify::{run_identity_grid, GridSpec, IdentityReport};
