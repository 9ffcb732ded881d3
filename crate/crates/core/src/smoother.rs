//! First-stage estimate of pi(x) = P(y = 1 | x, outcome observed).
//!
//! The default route is a penalized cubic-spline additive logistic model fit
//! to the observed rows: each continuous covariate gets a B-spline expansion
//! (see [`crate::basis`]) constrained to sum to zero over the fitting rows,
//! with a shared roughness penalty chosen by AIC over a fixed grid. Binary
//! covariates enter linearly. Two alternative routes exist for ablations and
//! tests: a plain linear-logit fit, and exact enumeration from known true
//! parameters.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::basis::SplineBasis;
use crate::data::{ColumnKind, Dataset, DesignMatrix};
use crate::error::{Error, Result};
use crate::glm;
use crate::linalg::{inv_upper_triangular, qr_solve};
use crate::math::{expit, expit_deriv, softplus};
use crate::oracle::{conditional_table, TruthSpec};

/// Fitted probabilities are clipped to `[PI_CLIP, 1 - PI_CLIP]` before use
/// downstream, where they sit inside logs and denominators.
pub const PI_CLIP: f64 = 1e-6;

const MAX_ITER: usize = 100;
const PEN_SCORE_TOL: f64 = 1e-6;
const PEN_OBJ_REL_TOL: f64 = 1e-10;
/// Penalized fits whose coefficients pass this bound are abandoned (the
/// roughness grid then falls back to other candidates).
const COEF_BOUND: f64 = 1e4;

/// Which first-stage estimator produces pi-hat.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmootherKind {
    /// Penalized-spline additive logistic model (the default).
    #[default]
    SplineGam,
    /// Linear-logit fit on the observed rows; an ablation that is simpler
    /// but misspecified whenever the selection model moves the subsample
    /// probabilities off the linear-logit form.
    ParametricLogit,
    /// Exact conditional probability from known true parameters. Only
    /// meaningful in simulations; isolates downstream stages from
    /// first-stage estimation error.
    OracleTruth,
}

/// Tuning knobs for the spline route.
#[derive(Debug, Clone)]
pub struct SplineGamOptions {
    /// Candidate roughness penalties, tried in order; the AIC-minimizing one
    /// is kept, with ties going to the earliest (smallest) value.
    pub lambda_grid: Vec<f64>,
    /// Interior-knot budget per continuous covariate (collapsed under ties).
    pub n_interior_knots: usize,
}

impl Default for SplineGamOptions {
    fn default() -> Self {
        SplineGamOptions {
            lambda_grid: (-3..=3).map(|k| 10f64.powi(k)).collect(),
            n_interior_knots: 10,
        }
    }
}

/// First-stage output: one probability per dataset row (observed or not).
#[derive(Debug, Clone)]
pub struct PiHat {
    /// `P(y = 1 | x_i, observed)` evaluated at every row, clipped.
    pub values: Array1<f64>,
    /// How many of the `values` hit the clip bounds.
    pub clip_count: usize,
    /// Trace of the hat matrix for the spline route; the parameter count for
    /// the parametric route; 0 for enumerated truth.
    pub effective_dof: f64,
    /// Chosen roughness penalty per covariate (`None` for linear terms and
    /// for non-spline routes).
    pub lambda: Vec<Option<f64>>,
    pub kind: SmootherKind,
}

/// Estimate pi(x) at every row of `d` with the default tuning.
///
/// `truth` is only consulted by [`SmootherKind::OracleTruth`]. Requires at
/// least one observed outcome of each class.
pub fn fit_pi_hat(d: &Dataset, kind: SmootherKind, truth: Option<&TruthSpec>) -> Result<PiHat> {
    fit_pi_hat_with(d, kind, truth, &SplineGamOptions::default())
}

/// [`fit_pi_hat`] with explicit spline tuning.
pub fn fit_pi_hat_with(
    d: &Dataset,
    kind: SmootherKind,
    truth: Option<&TruthSpec>,
    opts: &SplineGamOptions,
) -> Result<PiHat> {
    let obs = d.observed_indices();
    if obs.is_empty() {
        return Err(Error::DegenerateData("no rows with an observed outcome".into()));
    }
    let n_ones = obs.iter().filter(|&&i| d.y()[i] == Some(1)).count();
    if n_ones == 0 || n_ones == obs.len() {
        return Err(Error::DegenerateData(format!(
            "all observed outcomes equal {}; P(y = 1 | x, observed) is not estimable",
            usize::from(n_ones != 0),
        )));
    }

    let (raw, effective_dof, lambda) = match kind {
        SmootherKind::OracleTruth => {
            let t = truth.ok_or_else(|| {
                Error::Input("oracle-truth smoothing needs the true parameter values".into())
            })?;
            if t.p() != d.p() {
                return Err(Error::Input(format!(
                    "truth has {} covariates, data has {}",
                    t.p(),
                    d.p()
                )));
            }
            let mut values = Array1::zeros(d.n());
            for i in 0..d.n() {
                values[i] = conditional_table(t, &d.x_row(i))?.p_y1_given_s1;
            }
            (values, 0.0, vec![None; d.p()])
        }
        SmootherKind::ParametricLogit => {
            let (values, edf) = parametric_values(d, &obs)?;
            (values, edf, vec![None; d.p()])
        }
        SmootherKind::SplineGam => {
            if d.kinds().contains(&ColumnKind::Continuous) {
                spline_gam_values(d, &obs, opts)?
            } else {
                // Nothing to smooth: the spline model degenerates to the
                // linear one, so fit that directly.
                let (values, edf) = parametric_values(d, &obs)?;
                (values, edf, vec![None; d.p()])
            }
        }
    };
    let (values, clip_count) = clip_probs(raw);
    Ok(PiHat { values, clip_count, effective_dof, lambda, kind })
}

fn clip_probs(mut values: Array1<f64>) -> (Array1<f64>, usize) {
    let mut count = 0;
    for v in values.iter_mut() {
        if *v < PI_CLIP {
            *v = PI_CLIP;
            count += 1;
        } else if *v > 1.0 - PI_CLIP {
            *v = 1.0 - PI_CLIP;
            count += 1;
        }
    }
    (values, count)
}

/// Linear-logit fit on the observed rows, evaluated at every row.
fn parametric_values(d: &Dataset, obs: &[usize]) -> Result<(Array1<f64>, f64)> {
    let sub = d.subset(obs)?;
    let fit = glm::fit(&sub.design_full(), &sub.observed_outcomes(), None, None)?;
    let probs = glm::predict_prob(&fit, &d.design_full(), None)?;
    Ok((probs, fit.coef.len() as f64))
}

/// One additive term of the spline design.
enum Block {
    /// Binary covariate: a single raw column.
    Linear { col: usize },
    /// Continuous covariate: B-spline columns post-multiplied by `z`, the
    /// orthonormal complement of the column-sum vector over the fitting
    /// rows. That constraint removes the constant direction each spline
    /// block shares with the intercept.
    Smooth { col: usize, basis: SplineBasis, z: Array2<f64> },
}

impl Block {
    fn width(&self) -> usize {
        match self {
            Block::Linear { .. } => 1,
            Block::Smooth { z, .. } => z.ncols(),
        }
    }
}

fn build_blocks(d: &Dataset, obs: &[usize], n_knots: usize) -> Result<Vec<Block>> {
    let mut blocks = Vec::with_capacity(d.p());
    for j in 0..d.p() {
        match d.kinds()[j] {
            ColumnKind::Binary => blocks.push(Block::Linear { col: j }),
            ColumnKind::Continuous => {
                let vals: Vec<f64> = obs.iter().map(|&i| d.x()[[i, j]]).collect();
                let basis = SplineBasis::from_values(&vals, n_knots).map_err(|e| match e {
                    Error::DegenerateData(msg) => {
                        Error::DegenerateData(format!("covariate '{}': {msg}", d.names()[j]))
                    }
                    other => other,
                })?;
                let k = basis.len();
                let mut colsum = Array1::zeros(k);
                let mut row = vec![0.0; k];
                for &i in obs {
                    basis.eval_into(d.x()[[i, j]], &mut row);
                    for (acc, &v) in colsum.iter_mut().zip(&row) {
                        *acc += v;
                    }
                }
                let z = householder_null_space(&colsum);
                blocks.push(Block::Smooth { col: j, basis, z });
            }
        }
    }
    Ok(blocks)
}

/// Orthonormal basis of the hyperplane orthogonal to `c` (k x (k-1)),
/// taken from the trailing columns of the Householder reflector sending
/// `c` to a multiple of the first unit vector.
fn householder_null_space(c: &Array1<f64>) -> Array2<f64> {
    let k = c.len();
    let norm = c.dot(c).sqrt();
    let mut v = c.clone();
    v[0] += if c[0] >= 0.0 { norm } else { -norm };
    let vtv = v.dot(&v);
    let mut z = Array2::zeros((k, k - 1));
    for j in 1..k {
        for i in 0..k {
            z[[i, j - 1]] = f64::from(i == j) - 2.0 * v[i] * v[j] / vtv;
        }
    }
    z
}

/// Assemble `[1 | blocks...]` over the given rows. Spline blocks clamp
/// covariate values to the range seen at fitting time, so rows outside it
/// get the boundary prediction rather than an extrapolation.
fn block_design(d: &Dataset, rows: &[usize], blocks: &[Block]) -> Result<DesignMatrix> {
    let k_total = 1 + blocks.iter().map(Block::width).sum::<usize>();
    let mut values = Array2::zeros((rows.len(), k_total));
    let mut labels = Vec::with_capacity(k_total);
    labels.push("(intercept)".to_string());
    for b in blocks {
        match b {
            Block::Linear { col } => labels.push(d.names()[*col].clone()),
            Block::Smooth { col, z, .. } => {
                for q in 0..z.ncols() {
                    labels.push(format!("{}[{}]", d.names()[*col], q + 1));
                }
            }
        }
    }
    let mut raw = Vec::new();
    for (r, &i) in rows.iter().enumerate() {
        values[[r, 0]] = 1.0;
        let mut off = 1;
        for b in blocks {
            match b {
                Block::Linear { col } => {
                    values[[r, off]] = d.x()[[i, *col]];
                    off += 1;
                }
                Block::Smooth { col, basis, z } => {
                    raw.resize(basis.len(), 0.0);
                    basis.eval_into(d.x()[[i, *col]], &mut raw);
                    for q in 0..z.ncols() {
                        let mut acc = 0.0;
                        for (kk, &v) in raw.iter().enumerate() {
                            acc += v * z[[kk, q]];
                        }
                        values[[r, off + q]] = acc;
                    }
                    off += z.ncols();
                }
            }
        }
    }
    DesignMatrix::from_parts(values, labels)
}

/// Stacked curvature-penalty rows, aligned with the block design's columns.
/// Intercept and linear columns are unpenalized (all-zero columns).
fn block_penalty(blocks: &[Block], k_total: usize) -> Array2<f64> {
    let q_total: usize = blocks
        .iter()
        .map(|b| match b {
            Block::Smooth { basis, .. } => basis.len() - 2,
            Block::Linear { .. } => 0,
        })
        .sum();
    let mut pen = Array2::zeros((q_total, k_total));
    let mut row_off = 0;
    let mut col_off = 1;
    for b in blocks {
        match b {
            Block::Linear { .. } => col_off += 1,
            Block::Smooth { basis, z, .. } => {
                let dmat = basis.curvature_penalty();
                for r in 0..dmat.nrows() {
                    for c in 0..z.ncols() {
                        let mut acc = 0.0;
                        for kk in 0..z.nrows() {
                            acc += dmat[[r, kk]] * z[[kk, c]];
                        }
                        pen[[row_off + r, col_off + c]] = acc;
                    }
                }
                row_off += dmat.nrows();
                col_off += z.ncols();
            }
        }
    }
    pen
}

fn spline_gam_values(
    d: &Dataset,
    obs: &[usize],
    opts: &SplineGamOptions,
) -> Result<(Array1<f64>, f64, Vec<Option<f64>>)> {
    if opts.lambda_grid.is_empty() {
        return Err(Error::Input("empty roughness-penalty grid".into()));
    }
    if opts.lambda_grid.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        return Err(Error::Input("roughness penalties must be positive and finite".into()));
    }
    let blocks = build_blocks(d, obs, opts.n_interior_knots)?;
    let design_fit = block_design(d, obs, &blocks)?;
    let pen = block_penalty(&blocks, design_fit.ncols());
    let y: Array1<f64> = obs.iter().map(|&i| f64::from(d.y()[i].unwrap())).collect();

    // Grid search: candidates that fail to converge (typically tiny lambda
    // on nearly separated data) are skipped; an error surfaces only when
    // every candidate fails.
    let mut best: Option<(f64, PenalizedFit, f64)> = None;
    let mut last_err = None;
    for &lam in &opts.lambda_grid {
        match penalized_logit(&design_fit, &y, &pen, lam) {
            Ok(f) => {
                let aic = f.deviance + 2.0 * f.edf;
                if best.as_ref().is_none_or(|(_, _, best_aic)| aic < *best_aic) {
                    best = Some((lam, f, aic));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (lam, fit, _) = best.ok_or_else(|| last_err.unwrap())?;

    let all_rows: Vec<usize> = (0..d.n()).collect();
    let design_all = block_design(d, &all_rows, &blocks)?;
    let eta = design_all.values().dot(&fit.coef);
    let values = eta.mapv(expit);
    let lambda = d
        .kinds()
        .iter()
        .map(|k| match k {
            ColumnKind::Continuous => Some(lam),
            ColumnKind::Binary => None,
        })
        .collect();
    Ok((values, fit.edf, lambda))
}

struct PenalizedFit {
    coef: Array1<f64>,
    deviance: f64,
    edf: f64,
}

/// Minimize `deviance(beta) + lambda ||pen beta||^2` by IRLS with the
/// penalty carried as `sqrt(lambda) pen` rows appended to the weighted
/// least-squares system. Same skeleton as [`glm::fit`]: QR inner solve,
/// step halving, score-plus-objective convergence test.
fn penalized_logit(
    design: &DesignMatrix,
    y: &Array1<f64>,
    pen: &Array2<f64>,
    lambda: f64,
) -> Result<PenalizedFit> {
    let x = design.values();
    let (m, k) = x.dim();
    let q = pen.nrows();
    if m + q < k {
        return Err(Error::DegenerateData(format!(
            "{m} fitting rows plus {q} penalty rows cannot identify {k} coefficients"
        )));
    }
    let sqrt_lam = lambda.sqrt();

    let neg2_ll =
        |eta: &Array1<f64>| -2.0 * (0..m).map(|i| y[i] * eta[i] - softplus(eta[i])).sum::<f64>();
    let rough = |coef: &Array1<f64>| {
        let pb = pen.dot(coef);
        lambda * pb.dot(&pb)
    };

    let mut coef: Array1<f64> = Array1::zeros(k);
    let mut eta: Array1<f64> = Array1::zeros(m);
    let mut obj = neg2_ll(&eta);
    let mut prev_obj = f64::INFINITY;
    let mut max_score = f64::INFINITY;

    for iter in 0..MAX_ITER {
        let p: Array1<f64> = eta.mapv(expit);
        // Penalized score (gradient of -obj/2): X'(y - p) - lambda pen'pen beta.
        let ptp_b = pen.t().dot(&pen.dot(&coef));
        max_score = (0..k)
            .map(|j| {
                ((0..m).map(|i| x[[i, j]] * (y[i] - p[i])).sum::<f64>() - lambda * ptp_b[j]).abs()
            })
            .fold(0.0f64, f64::max);
        let rel = (obj - prev_obj).abs() / (obj.abs() + f64::EPSILON);
        if max_score <= PEN_SCORE_TOL && rel <= PEN_OBJ_REL_TOL {
            let edf = edf_at(design, &eta, pen, sqrt_lam)?;
            return Ok(PenalizedFit { coef, deviance: neg2_ll(&eta), edf });
        }

        let mut aug = Array2::zeros((m + q, k));
        let mut rhs = Array1::zeros(m + q);
        for i in 0..m {
            let w = expit_deriv(eta[i]);
            if w > 0.0 {
                let sw = w.sqrt();
                let z = eta[i] + (y[i] - p[i]) / w;
                for j in 0..k {
                    aug[[i, j]] = sw * x[[i, j]];
                }
                rhs[i] = sw * z;
            }
        }
        for r in 0..q {
            for j in 0..k {
                aug[[m + r, j]] = sqrt_lam * pen[[r, j]];
            }
        }
        let target = qr_solve(aug.view(), rhs.view())
            .map_err(|col| Error::SingularDesign { col, label: design.labels()[col].clone() })?
            .coef;

        let mut step = 1.0;
        let mut cand;
        let mut cand_eta;
        let mut cand_obj;
        loop {
            cand = &coef + &((&target - &coef) * step);
            cand_eta = x.dot(&cand);
            cand_obj = neg2_ll(&cand_eta) + rough(&cand);
            if cand_obj <= obj || step <= 1.0 / 1024.0 {
                break;
            }
            step *= 0.5;
        }
        if cand.iter().any(|v| !v.is_finite()) || !cand_obj.is_finite() {
            return Err(Error::Numerical("penalized IRLS produced a non-finite iterate".into()));
        }
        let inf_norm = cand.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        if inf_norm > COEF_BOUND {
            return Err(Error::NonConvergence {
                iterations: iter,
                max_abs_score: max_score,
                last_coef: cand.to_vec(),
            });
        }
        coef = cand;
        eta = cand_eta;
        prev_obj = obj;
        obj = cand_obj;
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, max_abs_score: max_score, last_coef: coef.to_vec() })
}

/// Effective degrees of freedom at the converged fit: the trace of the hat
/// matrix, computed as the squared Frobenius norm of `sqrt(W) X R^{-1}` with
/// `R` from QR of the penalty-augmented weighted design.
fn edf_at(
    design: &DesignMatrix,
    eta: &Array1<f64>,
    pen: &Array2<f64>,
    sqrt_lam: f64,
) -> Result<f64> {
    let x = design.values();
    let (m, k) = x.dim();
    let q = pen.nrows();
    let mut aug = Array2::zeros((m + q, k));
    let mut sw = vec![0.0; m];
    for i in 0..m {
        sw[i] = expit_deriv(eta[i]).sqrt();
        for j in 0..k {
            aug[[i, j]] = sw[i] * x[[i, j]];
        }
    }
    for r in 0..q {
        for j in 0..k {
            aug[[m + r, j]] = sqrt_lam * pen[[r, j]];
        }
    }
    let sol = qr_solve(aug.view(), Array1::zeros(m + q).view())
        .map_err(|col| Error::SingularDesign { col, label: design.labels()[col].clone() })?;
    let r_inv = inv_upper_triangular(&sol.r);
    let mut edf = 0.0;
    for i in 0..m {
        for c in 0..k {
            let mut acc = 0.0;
            for j in 0..=c {
                acc += sw[i] * x[[i, j]] * r_inv[[j, c]];
            }
            edf += acc * acc;
        }
    }
    Ok(edf)
}
