//! Exhaustive check of the model's log-relative-risk identities against the
//! enumeration oracle over a parameter/covariate grid.
//!
//! Five identities are checked at every grid point, all of them exact
//! algebra, so residuals should sit at rounding-error level:
//!
//! 1. `log RR_{Y=1|S,x} = log[1 + (e^{delta_y} - 1) P(Y=0|S=1,x)]`
//! 2. `log RR_{Y=0|S,x} = log[1 + (e^{-delta_y} - 1) P(Y=1|S=1,x)]`
//! 3. `logit P(Y=1|S=1,x) = logit P(Y=1|x) + log RR_{S=1|Y,x}` with the
//!    right-hand term computed by the estimator-side offset function
//! 4. `logit P(S=1|x) = delta_0 + x' delta_x + delta_y - log RR_{Y=1|S,x}`
//! 5. `logit P(S=1|x) = delta_0 + x' delta_x - log RR_{Y=0|S,x}`

use serde::{Deserialize, Serialize};

use crate::correction::{DeltaParams, OutcomeLevel, log_rr_s_given_y, log_rr_y_given_s_exact};
use crate::error::Result;
use crate::oracle::{CovariateLaw, TruthSpec, conditional_table};

/// The grid to sweep: one covariate, every combination of the listed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub beta0: Vec<f64>,
    pub beta_x: Vec<f64>,
    pub delta0: Vec<f64>,
    pub delta_x: Vec<f64>,
    pub delta_y: Vec<f64>,
    pub x: Vec<f64>,
    /// Maximum residual accepted as a pass.
    pub tol: f64,
    /// Test hook: deliberately flip the sign of identity 1's left-hand side
    /// so the failure path of the reporting machinery can be exercised.
    #[serde(default)]
    pub negate_exact_identity: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            beta0: vec![-2.0, 0.0, 2.0],
            beta_x: vec![-1.0, 0.0, 1.0],
            delta0: vec![-2.0, 0.0, 2.0],
            delta_x: vec![-1.0, 0.0, 1.0],
            delta_y: vec![-2.0, -0.5, 0.0, 0.5, 2.0],
            x: vec![-2.0, 0.0, 2.0],
            tol: 1e-10,
            negate_exact_identity: false,
        }
    }
}

/// One identity's result over the whole grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_residual: f64,
    pub n_failures: usize,
    pub pass: bool,
}

/// Outcome of [`run_identity_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n_points: usize,
    pub tol: f64,
    pub checks: Vec<IdentityCheck>,
    pub all_pass: bool,
}

const CHECK_NAMES: [&str; 5] = [
    "outcome-1 risk-ratio identity",
    "outcome-0 risk-ratio identity",
    "subsample-logit offset shift",
    "marginal-selection logit via outcome-1 term",
    "marginal-selection logit via outcome-0 term",
];

/// Sweep the grid, comparing every identity against the enumeration oracle.
pub fn run_identity_grid(spec: &GridSpec) -> Result<IdentityReport> {
    let mut max_res = [0.0f64; 5];
    let mut fails = [0usize; 5];
    let mut n_points = 0usize;

    for &b0 in &spec.beta0 {
        for &bx in &spec.beta_x {
            for &d0 in &spec.delta0 {
                for &dx in &spec.delta_x {
                    for &dy in &spec.delta_y {
                        let truth = TruthSpec {
                            beta0: b0,
                            beta_x: vec![bx],
                            delta0: d0,
                            delta_x: vec![dx],
                            delta_y: dy,
                            covariates: vec![CovariateLaw::StandardNormal],
                        };
                        let delta = DeltaParams {
                            delta0: d0,
                            delta_x: vec![dx],
                            delta_y: dy,
                        };
                        for &x in &spec.x {
                            n_points += 1;
                            let t = conditional_table(&truth, &[x])?;

                            let sign = if spec.negate_exact_identity { -1.0 } else { 1.0 };
                            let lhs1 = sign
                                * log_rr_y_given_s_exact(dy, t.p_y0_given_s1, OutcomeLevel::One)?;
                            let lhs2 =
                                log_rr_y_given_s_exact(dy, t.p_y1_given_s1, OutcomeLevel::Zero)?;
                            let shift = log_rr_s_given_y(&delta, &[x])?;
                            let base = d0 + dx * x;

                            let res = [
                                (lhs1 - t.log_rr_y1_given_s).abs(),
                                (lhs2 - t.log_rr_y0_given_s).abs(),
                                (t.logit_p_y1_given_s1() - t.logit_p_y1() - shift).abs(),
                                (t.logit_p_s1() - (base + dy - t.log_rr_y1_given_s)).abs(),
                                (t.logit_p_s1() - (base - t.log_rr_y0_given_s)).abs(),
                            ];
                            for k in 0..5 {
                                max_res[k] = max_res[k].max(res[k]);
                                if !(res[k] <= spec.tol) {
                                    fails[k] += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let checks: Vec<IdentityCheck> = (0..5)
        .map(|k| IdentityCheck {
            name: CHECK_NAMES[k].to_string(),
            max_residual: max_res[k],
            n_failures: fails[k],
            pass: fails[k] == 0,
        })
        .collect();
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(IdentityReport { n_points, tol: spec.tol, checks, all_pass })
}
