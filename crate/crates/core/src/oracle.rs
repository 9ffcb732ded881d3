//! Ground-truth machinery: exact enumeration of the joint outcome/observation
//! law at a covariate point, and a derivative-free maximum-likelihood search.
//!
//! Everything here is an independent check on the estimation code, so none of
//! it may call into the IRLS path. The enumeration works directly from the
//! model definition: outcome and observation are both Bernoulli with logistic
//! regressions
//!
//! ```text
//! logit P(Y = 1 | x)        = beta0  + x' beta_x
//! logit P(S = 1 | x, Y = y) = delta0 + x' delta_x + delta_y * y
//! ```
//!
//! and every conditional in [`ConditionalTable`] follows by summation and
//! Bayes' rule, no estimation involved.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::math::{expit, log_expit, softplus};

/// Marginal law of one covariate in the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateLaw {
    StandardNormal,
    Bernoulli { p: f64 },
    Uniform { low: f64, high: f64 },
}

impl CovariateLaw {
    fn validate(&self) -> Result<()> {
        match self {
            CovariateLaw::StandardNormal => Ok(()),
            CovariateLaw::Bernoulli { p } => {
                if p.is_finite() && (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(Error::Input(format!("bernoulli probability {p} outside [0, 1]")))
                }
            }
            CovariateLaw::Uniform { low, high } => {
                if low.is_finite() && high.is_finite() && low < high {
                    Ok(())
                } else {
                    Err(Error::Input(format!("uniform range [{low}, {high}] is empty")))
                }
            }
        }
    }
}

/// True parameter values of outcome and observation models, plus the
/// covariate laws used when simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub beta0: f64,
    pub beta_x: Vec<f64>,
    pub delta0: f64,
    pub delta_x: Vec<f64>,
    pub delta_y: f64,
    pub covariates: Vec<CovariateLaw>,
}

impl TruthSpec {
    pub fn p(&self) -> usize {
        self.beta_x.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.delta_x.len() != p || self.covariates.len() != p {
            return Err(Error::Input(format!(
                "coefficient/law lengths disagree: beta_x {}, delta_x {}, covariates {}",
                p,
                self.delta_x.len(),
                self.covariates.len()
            )));
        }
        let coefs = [self.beta0, self.delta0, self.delta_y];
        if coefs.iter().chain(&self.beta_x).chain(&self.delta_x).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite truth coefficient".into()));
        }
        for law in &self.covariates {
            law.validate()?;
        }
        Ok(())
    }

    /// Outcome linear predictor `beta0 + x' beta_x`.
    pub fn eta_outcome(&self, x_row: &[f64]) -> f64 {
        self.beta0 + dot(&self.beta_x, x_row)
    }

    /// Observation linear predictor at y = 0: `delta0 + x' delta_x`.
    pub fn eta_selection_base(&self, x_row: &[f64]) -> f64 {
        self.delta0 + dot(&self.delta_x, x_row)
    }

    /// True outcome coefficient vector `[beta0, beta_x...]`.
    pub fn beta_vector(&self) -> Vec<f64> {
        let mut v = vec![self.beta0];
        v.extend_from_slice(&self.beta_x);
        v
    }
}

fn dot(coef: &[f64], x: &[f64]) -> f64 {
    coef.iter().zip(x).map(|(c, v)| c * v).sum()
}

/// All conditionals of (Y, S) at one covariate point, enumerated exactly.
///
/// Complements are stored alongside each probability so log odds and log
/// risk ratios can be formed without `1 - p` cancellation.
#[derive(Debug, Clone)]
pub struct ConditionalTable {
    pub p_y1: f64,
    pub p_y0: f64,
    /// P(S=1 | Y=1, x) and P(S=1 | Y=0, x).
    pub p_s1_given_y1: f64,
    pub p_s1_given_y0: f64,
    pub p_s1: f64,
    pub p_s0: f64,
    pub p_y1_given_s1: f64,
    pub p_y0_given_s1: f64,
    pub p_y1_given_s0: f64,
    pub p_y0_given_s0: f64,
    /// log of P(S=1|Y=1,x) / P(S=1|Y=0,x).
    pub log_rr_s_given_y: f64,
    /// log of P(Y=1|S=1,x) / P(Y=1|S=0,x).
    pub log_rr_y1_given_s: f64,
    /// log of P(Y=0|S=1,x) / P(Y=0|S=0,x).
    pub log_rr_y0_given_s: f64,
}

impl ConditionalTable {
    pub fn logit_p_y1(&self) -> f64 {
        self.p_y1.ln() - self.p_y0.ln()
    }

    pub fn logit_p_s1(&self) -> f64 {
        self.p_s1.ln() - self.p_s0.ln()
    }

    pub fn logit_p_y1_given_s1(&self) -> f64 {
        self.p_y1_given_s1.ln() - self.p_y0_given_s1.ln()
    }
}

const DEGENERATE_TOL: f64 = 1e-12;

/// Enumerate the joint law of (Y, S) at covariate point `x_row`.
///
/// Errors with [`Error::DegenerateCondition`] if any probability being
/// conditioned on is within 1e-12 of 0 or 1, since the conditionals (and the
/// log risk ratios built from them) stop being meaningful there.
pub fn conditional_table(truth: &TruthSpec, x_row: &[f64]) -> Result<ConditionalTable> {
    truth.validate()?;
    if x_row.len() != truth.p() {
        return Err(Error::Input(format!(
            "x has {} entries, truth has {} covariates",
            x_row.len(),
            truth.p()
        )));
    }
    if x_row.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite covariate point".into()));
    }

    let eta_y = truth.eta_outcome(x_row);
    let eta_s = truth.eta_selection_base(x_row);
    let p_y1 = expit(eta_y);
    let p_y0 = expit(-eta_y);
    let a = expit(eta_s + truth.delta_y); // P(S=1 | Y=1, x)
    let a_c = expit(-(eta_s + truth.delta_y));
    let b = expit(eta_s); // P(S=1 | Y=0, x)
    let b_c = expit(-eta_s);

    let p_s1 = a * p_y1 + b * p_y0;
    let p_s0 = a_c * p_y1 + b_c * p_y0;

    // Conditioning on S happens below (Bayes divides by these); model-given
    // probabilities like P(S=1|Y=1,x) may saturate freely.
    let interior = |v: f64, what: &str| -> Result<()> {
        if v <= DEGENERATE_TOL || v >= 1.0 - DEGENERATE_TOL {
            Err(Error::DegenerateCondition(format!("{what} = {v:.3e} is 0 or 1 to tolerance")))
        } else {
            Ok(())
        }
    };
    interior(p_s1, "P(S=1|x)")?;
    interior(p_s0, "P(S=0|x)")?;

    let p_y1_given_s1 = a * p_y1 / p_s1;
    let p_y0_given_s1 = b * p_y0 / p_s1;
    let p_y1_given_s0 = a_c * p_y1 / p_s0;
    let p_y0_given_s0 = b_c * p_y0 / p_s0;

    let table = ConditionalTable {
        p_y1,
        p_y0,
        p_s1_given_y1: a,
        p_s1_given_y0: b,
        p_s1,
        p_s0,
        p_y1_given_s1,
        p_y0_given_s1,
        p_y1_given_s0,
        p_y0_given_s0,
        log_rr_s_given_y: log_expit(eta_s + truth.delta_y) - log_expit(eta_s),
        log_rr_y1_given_s: (p_y1_given_s1 / p_y1_given_s0).ln(),
        log_rr_y0_given_s: (p_y0_given_s1 / p_y0_given_s0).ln(),
    };
    if !(table.log_rr_s_given_y.is_finite()
        && table.log_rr_y1_given_s.is_finite()
        && table.log_rr_y0_given_s.is_finite())
    {
        return Err(Error::Numerical(
            "an outcome probability saturated; log risk ratios are not finite".into(),
        ));
    }
    Ok(table)
}

/// Negative Bernoulli log-likelihood with offset; the objective minimized by
/// [`direct_search_mle`]. Written from the density, independent of any
/// fitting code.
fn neg_log_lik(design: &DesignMatrix, response: &Array1<f64>, offset: &Array1<f64>, coef: &[f64]) -> f64 {
    let x = design.values();
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let mut eta = offset[i];
        for j in 0..x.ncols() {
            eta += x[[i, j]] * coef[j];
        }
        total += response[i] * eta - softplus(eta);
    }
    -total
}

const SEPARATION_BOUND: f64 = 30.0;

/// Maximum-likelihood logistic coefficients by Nelder-Mead simplex search.
///
/// This is the slow, derivative-free reference the IRLS engine is checked
/// against, so it deliberately shares no code with it beyond scalar math.
/// Limits: at most 4 design columns and 200 rows. A search that wanders past
/// |coef| = 30 is reported as separation (the likelihood has no interior
/// maximum there); hitting the evaluation budget is reported as
/// non-convergence.
pub fn direct_search_mle(
    design: &DesignMatrix,
    response: &Array1<f64>,
    offset: &Array1<f64>,
) -> Result<Array1<f64>> {
    let (n, k) = (design.nrows(), design.ncols());
    if k > 4 || n > 200 {
        return Err(Error::Input(format!(
            "direct search is limited to 4 columns and 200 rows, got {k} x {n}"
        )));
    }
    if response.len() != n || offset.len() != n {
        return Err(Error::Input("response/offset length mismatch".into()));
    }
    if response.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Input("response must be 0/1".into()));
    }
    if offset.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite offset".into()));
    }

    let f = |coef: &[f64]| neg_log_lik(design, response, offset, coef);

    let mut best = vec![0.0; k];
    // Polishing restarts: rebuild a fresh simplex around the incumbent with a
    // smaller scale. Nelder-Mead stagnates near optima; restarting recovers
    // the last digits.
    for &scale in &[0.5, 1e-3, 1e-6] {
        best = nelder_mead(&f, &best, scale, 4000)?;
        if best.iter().any(|v| v.abs() > SEPARATION_BOUND) {
            return Err(Error::Separation {
                coef_inf_norm: best.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                bound: SEPARATION_BOUND,
            });
        }
    }
    Ok(Array1::from_vec(best))
}

/// One Nelder-Mead run: simplex at `start` with the given initial edge scale.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    scale: f64,
    max_evals: usize,
) -> Result<Vec<f64>> {
    let k = start.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    pts.push(start.to_vec());
    for j in 0..k {
        let mut v = start.to_vec();
        v[j] += scale;
        pts.push(v);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = k + 1;

    loop {
        // Order by objective, best first (stable, so exact ties keep order).
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
        let pts_sorted: Vec<Vec<f64>> = order.iter().map(|&i| pts[i].clone()).collect();
        let vals_sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        pts = pts_sorted;
        vals = vals_sorted;

        let spread = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread < 1e-10 && (vals[k] - vals[0]).abs() < 1e-13 * (1.0 + vals[0].abs()) {
            return Ok(pts[0].clone());
        }
        if pts[0].iter().any(|v| v.abs() > 2.0 * SEPARATION_BOUND) {
            // Let the caller's bound check classify this; stop wandering.
            return Ok(pts[0].clone());
        }
        if evals > max_evals {
            return Err(Error::NonConvergence {
                iterations: evals,
                max_abs_score: f64::NAN,
                last_coef: pts[0].clone(),
            });
        }

        // Centroid of all but the worst.
        let centroid: Vec<f64> =
            (0..k).map(|j| pts[..k].iter().map(|p| p[j]).sum::<f64>() / k as f64).collect();
        let worst = pts[k].clone();
        let at = |t: f64| -> Vec<f64> {
            (0..k).map(|j| centroid[j] + t * (centroid[j] - worst[j])).collect()
        };

        let refl = at(1.0);
        let f_refl = f(&refl);
        evals += 1;
        if f_refl < vals[0] {
            let expa = at(2.0);
            let f_expa = f(&expa);
            evals += 1;
            if f_expa < f_refl {
                pts[k] = expa;
                vals[k] = f_expa;
            } else {
                pts[k] = refl;
                vals[k] = f_refl;
            }
        } else if f_refl < vals[k - 1] {
            pts[k] = refl;
            vals[k] = f_refl;
        } else {
            let contr = if f_refl < vals[k] { at(0.5) } else { at(-0.5) };
            let f_contr = f(&contr);
            evals += 1;
            if f_contr < vals[k].min(f_refl) {
                pts[k] = contr;
                vals[k] = f_contr;
            } else {
                // Shrink toward the best point.
                for i in 1..=k {
                    for j in 0..k {
                        pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
                    }
                    vals[i] = f(&pts[i]);
                }
                evals += k;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;
    use ndarray::{array, Array2};

    fn single_cov_truth(beta0: f64, beta_x: f64, delta0: f64, delta_x: f64, delta_y: f64) -> TruthSpec {
        TruthSpec {
            beta0,
            beta_x: vec![beta_x],
            delta0,
            delta_x: vec![delta_x],
            delta_y,
            covariates: vec![CovariateLaw::StandardNormal],
        }
    }

    #[test]
    fn intercept_only_point_matches_hand_computation() {
        // beta0 = -1.7, delta0 = 0.2, delta_y = 1.5, no covariates.
        // p1 = expit(-1.7) = 0.154465, a = expit(1.7) = 0.845535,
        // b = expit(0.2) = 0.549834, P(S=1) = a*p1 + b*(1-p1) = 0.595509...
        let t = TruthSpec {
            beta0: -1.7,
            beta_x: vec![],
            delta0: 0.2,
            delta_x: vec![],
            delta_y: 1.5,
            covariates: vec![],
        };
        let tab = conditional_table(&t, &[]).unwrap();
        assert!((tab.p_y1 - 0.154465).abs() < 1e-6);
        assert!((tab.p_s1_given_y1 - 0.845535).abs() < 1e-6);
        assert!((tab.p_s1_given_y0 - 0.549834).abs() < 1e-6);
        let p_s1 = 0.845_534_734_916_465_2 * 0.154_465_265_083_534_73
            + 0.549_833_997_312_478 * 0.845_534_734_916_465_2;
        assert!((tab.p_s1 - p_s1).abs() < 1e-12);
        assert!((tab.p_s1 - 0.595509).abs() < 2e-6);
        // Conditionals by Bayes, recomputed by hand here.
        let want_y1_s1 = 0.845_534_734_916_465_2 * 0.154_465_265_083_534_73 / p_s1;
        assert!((tab.p_y1_given_s1 - want_y1_s1).abs() < 1e-12);
        // Rows of the table are coherent probabilities.
        assert!((tab.p_y1_given_s1 + tab.p_y0_given_s1 - 1.0).abs() < 1e-12);
        assert!((tab.p_y1_given_s0 + tab.p_y0_given_s0 - 1.0).abs() < 1e-12);
        assert!((tab.p_s1 + tab.p_s0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_delta_y_saturates_the_selected_conditional() {
        // As delta_y grows, P(S=1|Y=1,x) -> 1, so
        // P(Y=1|S=1,x) -> p1 / (p1 + b q).
        let t = single_cov_truth(-0.4, 0.8, 0.3, -0.2, 30.0);
        let x = [0.7];
        let tab = conditional_table(&t, &x).unwrap();
        let p1 = expit(t.eta_outcome(&x));
        let q = 1.0 - p1;
        let b = expit(t.eta_selection_base(&x));
        assert!((tab.p_y1_given_s1 - p1 / (p1 + b * q)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_conditioning_is_refused() {
        // delta0 = 60 puts P(S=1|Y=0,x) within 1e-12 of 1.
        let t = single_cov_truth(0.0, 0.0, 60.0, 0.0, 1.0);
        let err = conditional_table(&t, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCondition(_)), "got {err:?}");
    }

    #[test]
    fn length_mismatch_is_input_error() {
        let t = single_cov_truth(0.0, 1.0, 0.0, 1.0, 1.0);
        assert!(matches!(conditional_table(&t, &[]), Err(Error::Input(_))));
    }

    #[test]
    fn log_rr_matches_logit_gap_algebra() {
        // log RR(Y=1|S) = logit P(S=1|Y=1,x) - logit P(S=1|x): an equivalent
        // closed form, derived independently of the ratio route the table
        // uses. Agreement pins both down.
        let t = single_cov_truth(-1.0, 0.5, 0.8, -0.3, 1.2);
        let x = [0.4];
        let tab = conditional_table(&t, &x).unwrap();
        let alt = logit(tab.p_s1_given_y1) - tab.logit_p_s1();
        assert!((tab.log_rr_y1_given_s - alt).abs() < 1e-12);
        let alt0 = logit(tab.p_s1_given_y0) - tab.logit_p_s1();
        assert!((tab.log_rr_y0_given_s - alt0).abs() < 1e-12);
    }

    #[test]
    fn direct_search_recovers_closed_form_intercept_mle() {
        // Three successes out of four: MLE of the intercept is log(3).
        let x = Array2::ones((4, 1));
        let design = DesignMatrix::from_parts(x, vec!["(intercept)".into()]).unwrap();
        let y = array![1.0, 1.0, 1.0, 0.0];
        let offset = Array1::zeros(4);
        let coef = direct_search_mle(&design, &y, &offset).unwrap();
        assert!((coef[0] - 3.0f64.ln()).abs() < 1e-7, "got {}", coef[0]);
    }

    #[test]
    fn direct_search_flags_separated_data() {
        let design = DesignMatrix::from_parts(Array2::ones((4, 1)), vec!["(intercept)".into()])
            .unwrap();
        let y = array![1.0, 1.0, 1.0, 1.0];
        let offset = Array1::zeros(4);
        let err = direct_search_mle(&design, &y, &offset).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "got {err:?}");
    }

    #[test]
    fn direct_search_honors_size_limits() {
        let design = DesignMatrix::from_parts(Array2::ones((201, 1)), vec!["i".into()]).unwrap();
        let y = Array1::zeros(201);
        let offset = Array1::zeros(201);
        assert!(matches!(direct_search_mle(&design, &y, &offset), Err(Error::Input(_))));
    }
}
