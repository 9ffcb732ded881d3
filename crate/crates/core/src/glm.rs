//! Logistic regression by iteratively reweighted least squares.
//!
//! Supports per-observation offsets (the correction pipeline's main need) and
//! non-negative case weights. Each Newton step solves the weighted
//! least-squares problem by orthogonal (QR) decomposition of the
//! square-root-weighted design rather than by normal equations, and the run
//! is a pure function of its inputs: fixed zero start, fixed iteration order,
//! no randomness.

use ndarray::{Array1, Array2, ArrayView2};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{inv_upper_triangular, qr_solve, sym_outer};
use crate::math::{expit, expit_deriv, softplus};

/// Coefficient bound past which a fit is treated as (quasi-)separated:
/// on the logit scale |30| is probability 1 - 1e-13, numerically saturated.
pub const SEPARATION_BOUND: f64 = 30.0;

const MAX_ITER: usize = 100;
const SCORE_TOL: f64 = 1e-8;
const LOGLIK_REL_TOL: f64 = 1e-10;

/// A converged (or best-effort) logistic fit.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: Array1<f64>,
    /// Inverse observed information at the optimum.
    pub cov: Array2<f64>,
    pub log_lik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_abs_score: f64,
    pub labels: Vec<String>,
}

impl LogisticFit {
    /// Plug-in standard errors: square roots of the covariance diagonal.
    pub fn se(&self) -> Vec<f64> {
        (0..self.coef.len()).map(|j| self.cov[[j, j]].sqrt()).collect()
    }
}

/// Fit a logistic regression of `response` on `design`.
///
/// `offset` defaults to zeros and `weights` to ones. Convergence demands both
/// a small score (max |gradient| <= 1e-8) and a settled log-likelihood
/// (relative change <= 1e-10); the conjunction matters, because on separated
/// data the score goes quiet while the likelihood still creeps, and the
/// runaway coefficient check below is what ends those fits.
pub fn fit(
    design: &DesignMatrix,
    response: &Array1<f64>,
    offset: Option<&Array1<f64>>,
    weights: Option<&Array1<f64>>,
) -> Result<LogisticFit> {
    let x = design.values();
    let (n, k) = x.dim();
    if response.len() != n {
        return Err(Error::Input(format!("{} responses for {n} rows", response.len())));
    }
    if response.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Input("response must be coded 0/1".into()));
    }
    let offset = match offset {
        Some(o) => {
            if o.len() != n {
                return Err(Error::Input(format!("{} offsets for {n} rows", o.len())));
            }
            if o.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("non-finite offset".into()));
            }
            o.clone()
        }
        None => Array1::zeros(n),
    };
    let weights = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Input(format!("{} weights for {n} rows", w.len())));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Input("weights must be finite and non-negative".into()));
            }
            if w.sum() <= 0.0 {
                return Err(Error::Input("all weights are zero".into()));
            }
            w.clone()
        }
        None => Array1::ones(n),
    };
    if n < k {
        return Err(Error::DegenerateData(format!("{n} rows cannot identify {k} coefficients")));
    }

    let log_lik_at = |eta: &Array1<f64>| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            total += weights[i] * (response[i] * eta[i] - softplus(eta[i]));
        }
        total
    };

    let mut coef: Array1<f64> = Array1::zeros(k);
    let mut eta = offset.clone();
    let mut log_lik = log_lik_at(&eta);
    let mut prev_log_lik = f64::INFINITY;
    let mut max_abs_score = f64::INFINITY;

    for iter in 0..MAX_ITER {
        let p: Array1<f64> = eta.iter().map(|&e| expit(e)).collect();
        max_abs_score = (0..k)
            .map(|j| {
                (0..n).map(|i| x[[i, j]] * weights[i] * (response[i] - p[i])).sum::<f64>().abs()
            })
            .fold(0.0f64, f64::max);
        let rel_change = (log_lik - prev_log_lik).abs() / (log_lik.abs() + f64::EPSILON);
        if max_abs_score <= SCORE_TOL && rel_change <= LOGLIK_REL_TOL {
            let cov = information_inverse(design, &eta, &weights)?;
            return Ok(LogisticFit {
                coef,
                cov,
                log_lik,
                iterations: iter,
                converged: true,
                max_abs_score,
                labels: design.labels().to_vec(),
            });
        }

        // Working response and weights for the Newton step.
        let mut sqrt_w = Array1::zeros(n);
        let mut rhs = Array1::zeros(n);
        for i in 0..n {
            let wvar = weights[i] * expit_deriv(eta[i]);
            if wvar > 0.0 {
                let sw = wvar.sqrt();
                let z = (eta[i] - offset[i]) + (response[i] - p[i]) / expit_deriv(eta[i]);
                sqrt_w[i] = sw;
                rhs[i] = sw * z;
            }
        }
        let mut xw = x.to_owned();
        for i in 0..n {
            for j in 0..k {
                xw[[i, j]] *= sqrt_w[i];
            }
        }
        let target = qr_solve(xw.view(), rhs.view())
            .map_err(|col| Error::SingularDesign { col, label: design.labels()[col].clone() })?
            .coef;

        // Step halving: accept the Newton point unless it degrades the
        // log-likelihood, in which case bisect back toward the current one.
        let mut step = 1.0;
        let mut cand = Array1::zeros(k);
        let mut cand_eta;
        let mut cand_ll;
        loop {
            for j in 0..k {
                cand[j] = coef[j] + step * (target[j] - coef[j]);
            }
            cand_eta = eta_at(x, &cand, &offset);
            cand_ll = log_lik_at(&cand_eta);
            if cand_ll >= log_lik || step <= 1.0 / 1024.0 {
                break;
            }
            step *= 0.5;
        }
        if cand.iter().any(|v| !v.is_finite()) || !cand_ll.is_finite() {
            return Err(Error::Numerical("IRLS produced a non-finite iterate".into()));
        }
        let inf_norm = cand.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if inf_norm > SEPARATION_BOUND {
            return Err(Error::Separation { coef_inf_norm: inf_norm, bound: SEPARATION_BOUND });
        }

        coef = cand;
        eta = cand_eta;
        prev_log_lik = log_lik;
        log_lik = cand_ll;
    }

    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        max_abs_score,
        last_coef: coef.to_vec(),
    })
}

fn eta_at(x: ArrayView2<f64>, coef: &Array1<f64>, offset: &Array1<f64>) -> Array1<f64> {
    let (n, k) = x.dim();
    let mut eta = offset.clone();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..k {
            acc += x[[i, j]] * coef[j];
        }
        eta[i] += acc;
    }
    eta
}

/// Inverse of X' W X at the given linear predictor, via one more QR.
fn information_inverse(
    design: &DesignMatrix,
    eta: &Array1<f64>,
    weights: &Array1<f64>,
) -> Result<Array2<f64>> {
    let x = design.values();
    let (n, k) = x.dim();
    let mut xw = x.to_owned();
    for i in 0..n {
        let sw = (weights[i] * expit_deriv(eta[i])).sqrt();
        for j in 0..k {
            xw[[i, j]] *= sw;
        }
    }
    let sol = qr_solve(xw.view(), Array1::zeros(n).view())
        .map_err(|col| Error::SingularDesign { col, label: design.labels()[col].clone() })?;
    let r_inv = inv_upper_triangular(&sol.r);
    Ok(sym_outer(&r_inv))
}

/// Fitted probabilities `expit(offset + X coef)` for a converged fit,
/// clamped to the open interval (0, 1).
pub fn predict_prob(
    fit: &LogisticFit,
    design: &DesignMatrix,
    offset: Option<&Array1<f64>>,
) -> Result<Array1<f64>> {
    if !fit.converged {
        return Err(Error::Input("refusing to predict from a non-converged fit".into()));
    }
    let x = design.values();
    let (n, k) = x.dim();
    if k != fit.coef.len() {
        return Err(Error::Input(format!(
            "{} design columns for {} coefficients",
            k,
            fit.coef.len()
        )));
    }
    let offset = match offset {
        Some(o) => {
            if o.len() != n {
                return Err(Error::Input(format!("{} offsets for {n} rows", o.len())));
            }
            if o.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("non-finite offset".into()));
            }
            o.clone()
        }
        None => Array1::zeros(n),
    };
    let eta = eta_at(x, &fit.coef, &offset);
    Ok(eta.iter().map(|&e| expit(e).max(f64::MIN_POSITIVE).min(1.0 - f64::EPSILON)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::direct_search_mle;
    use ndarray::array;

    fn intercept_design(n: usize) -> DesignMatrix {
        DesignMatrix::from_parts(Array2::ones((n, 1)), vec!["(intercept)".into()]).unwrap()
    }

    #[test]
    fn balanced_intercept_fit_is_zero() {
        let fit = fit(&intercept_design(2), &array![0.0, 1.0], None, None).unwrap();
        assert!(fit.converged);
        assert!(fit.coef[0].abs() < 1e-12, "got {}", fit.coef[0]);
        assert!(fit.iterations <= 2);
    }

    #[test]
    fn three_of_four_intercept_fit_is_log3() {
        let fit = fit(&intercept_design(4), &array![1.0, 1.0, 1.0, 0.0], None, None).unwrap();
        assert!(fit.converged);
        assert!((fit.coef[0] - 3.0f64.ln()).abs() < 1e-8, "got {}", fit.coef[0]);
        assert!(fit.max_abs_score <= SCORE_TOL);
        assert!(fit.cov[[0, 0]] > 0.0);
    }

    #[test]
    fn agrees_with_direct_search_on_a_small_instance() {
        // 20 rows, 2 covariates, fixed values; no randomness needed to make
        // the comparison meaningful.
        let mut x = Array2::ones((20, 3));
        for i in 0..20 {
            let t = (i as f64) / 19.0 * 4.0 - 2.0;
            x[[i, 1]] = t;
            x[[i, 2]] = (3.1 * t).sin();
        }
        let design = DesignMatrix::from_parts(
            x,
            vec!["(intercept)".into(), "x1".into(), "x2".into()],
        )
        .unwrap();
        let y: Array1<f64> = (0..20)
            .map(|i| if (i * 7 + 3) % 5 < 2 || i % 11 == 0 { 1.0 } else { 0.0 })
            .collect();
        let offset = Array1::zeros(20);
        let irls = fit(&design, &y, Some(&offset), None).unwrap();
        let oracle = direct_search_mle(&design, &y, &offset).unwrap();
        for j in 0..3 {
            assert!(
                (irls.coef[j] - oracle[j]).abs() < 1e-6,
                "coef {j}: IRLS {} vs search {}",
                irls.coef[j],
                oracle[j]
            );
        }
    }

    #[test]
    fn all_one_responses_raise_separation() {
        let err = fit(&intercept_design(4), &array![1.0, 1.0, 1.0, 1.0], None, None).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "got {err:?}");
    }

    #[test]
    fn offset_in_design_span_shifts_coefficients_exactly() {
        let mut xm = Array2::ones((12, 2));
        for i in 0..12 {
            xm[[i, 1]] = (i as f64) * 0.3 - 1.8;
        }
        let design =
            DesignMatrix::from_parts(xm.clone(), vec!["(intercept)".into(), "x".into()]).unwrap();
        let y = array![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let c = array![0.4, -0.7];
        let offset: Array1<f64> = (0..12).map(|i| xm[[i, 0]] * c[0] + xm[[i, 1]] * c[1]).collect();

        let plain = fit(&design, &y, None, None).unwrap();
        let shifted = fit(&design, &y, Some(&offset), None).unwrap();
        for j in 0..2 {
            assert!(
                (shifted.coef[j] + c[j] - plain.coef[j]).abs() < 1e-8,
                "coef {j} shift identity violated"
            );
        }
        assert!((shifted.log_lik - plain.log_lik).abs() < 1e-8);
    }

    #[test]
    fn explicit_zero_offset_changes_nothing_bitwise() {
        let design = intercept_design(4);
        let y = array![1.0, 1.0, 1.0, 0.0];
        let with = fit(&design, &y, Some(&Array1::zeros(4)), None).unwrap();
        let without = fit(&design, &y, None, None).unwrap();
        assert_eq!(with.coef[0].to_bits(), without.coef[0].to_bits());
        assert_eq!(with.log_lik.to_bits(), without.log_lik.to_bits());
    }

    #[test]
    fn integer_weights_equal_row_duplication() {
        let design3 = DesignMatrix::from_parts(
            array![[1.0, 0.5], [1.0, -1.0], [1.0, 2.0]],
            vec!["(intercept)".into(), "x".into()],
        )
        .unwrap();
        let weighted =
            fit(&design3, &array![1.0, 0.0, 0.0], None, Some(&array![2.0, 1.0, 1.0])).unwrap();
        let design4 = DesignMatrix::from_parts(
            array![[1.0, 0.5], [1.0, 0.5], [1.0, -1.0], [1.0, 2.0]],
            vec!["(intercept)".into(), "x".into()],
        )
        .unwrap();
        let duplicated = fit(&design4, &array![1.0, 1.0, 0.0, 0.0], None, None).unwrap();
        // The two runs take different IRLS paths and each stops inside the
        // score tolerance ball, so agreement is 1e-8-grade, not exact.
        for j in 0..2 {
            assert!((weighted.coef[j] - duplicated.coef[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn duplicate_column_is_reported_singular() {
        let x = array![[1.0, 2.0, 2.0], [1.0, -1.0, -1.0], [1.0, 0.5, 0.5], [1.0, 3.0, 3.0]];
        let design = DesignMatrix::from_parts(
            x,
            vec!["(intercept)".into(), "x".into(), "x_copy".into()],
        )
        .unwrap();
        let err = fit(&design, &array![1.0, 0.0, 1.0, 0.0], None, None).unwrap_err();
        match err {
            Error::SingularDesign { col, label } => {
                assert_eq!(col, 2);
                assert_eq!(label, "x_copy");
            }
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn more_columns_than_rows_is_degenerate() {
        let x = array![[1.0, 2.0, 3.0]];
        let design =
            DesignMatrix::from_parts(x, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let err = fit(&design, &array![1.0], None, None).unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn predict_prob_known_value_and_range() {
        let fit = LogisticFit {
            coef: array![-1.7],
            cov: Array2::eye(1),
            log_lik: 0.0,
            iterations: 0,
            converged: true,
            max_abs_score: 0.0,
            labels: vec!["(intercept)".into()],
        };
        let p = predict_prob(&fit, &intercept_design(1), None).unwrap();
        assert!((p[0] - 0.154465).abs() < 1e-6);

        let extreme = LogisticFit { coef: array![800.0], ..fit.clone() };
        let p = predict_prob(&extreme, &intercept_design(1), None).unwrap();
        assert!(p[0] > 0.0 && p[0] < 1.0);
    }

    #[test]
    fn predict_prob_rejects_bad_inputs() {
        let ok = LogisticFit {
            coef: array![0.0],
            cov: Array2::eye(1),
            log_lik: 0.0,
            iterations: 0,
            converged: true,
            max_abs_score: 0.0,
            labels: vec!["(intercept)".into()],
        };
        let bad_offset = array![f64::INFINITY];
        assert!(predict_prob(&ok, &intercept_design(1), Some(&bad_offset)).is_err());
        let unconverged = LogisticFit { converged: false, ..ok };
        assert!(predict_prob(&unconverged, &intercept_design(1), None).is_err());
    }

    #[test]
    fn score_is_tiny_at_convergence() {
        let mut x = Array2::ones((15, 2));
        for i in 0..15 {
            x[[i, 1]] = (i as f64 * 0.9).cos();
        }
        let design =
            DesignMatrix::from_parts(x.clone(), vec!["(intercept)".into(), "x".into()]).unwrap();
        let y: Array1<f64> = (0..15).map(|i| f64::from(i % 3 == 0)).collect();
        let f = fit(&design, &y, None, None).unwrap();
        // Recompute the score from scratch at the returned coefficients.
        for j in 0..2 {
            let s: f64 = (0..15)
                .map(|i| {
                    let eta = x[[i, 0]] * f.coef[0] + x[[i, 1]] * f.coef[1];
                    x[[i, j]] * (y[i] - expit(eta))
                })
                .sum();
            assert!(s.abs() <= 1e-8, "score {j} = {s}");
        }
    }
}
