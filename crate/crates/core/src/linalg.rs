//! Dense least-squares machinery: Householder QR with rank detection.
//!
//! The solvers here deliberately avoid forming normal equations; every
//! weighted least-squares step in the crate routes through [`qr_solve`] on
//! the (possibly row-augmented) square-root-weighted system.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Result of a QR least-squares solve.
#[derive(Debug)]
pub struct QrSolution {
    /// Minimizer of ||A x - b||^2.
    pub coef: Array1<f64>,
    /// Upper-triangular factor; `R^T R = A^T A`.
    pub r: Array2<f64>,
}

/// Solve the least-squares problem min ||A x - b||^2 by Householder QR.
///
/// Requires `m >= k`. Returns `Err(col)` if column `col` of `A` is
/// (numerically) linearly dependent on the preceding columns, with dependence
/// judged against `sqrt(m) * eps * max_column_norm`.
pub fn qr_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<QrSolution, usize> {
    let (m, k) = a.dim();
    assert!(m >= k, "need at least as many rows as columns");
    assert_eq!(b.len(), m);

    let mut a = a.to_owned();
    let mut b = b.to_owned();

    let max_col_norm = (0..k)
        .map(|j| a.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    let tol = (m as f64).sqrt() * f64::EPSILON * max_col_norm;

    for j in 0..k {
        let tail_norm: f64 = (j..m).map(|i| a[[i, j]] * a[[i, j]]).sum::<f64>().sqrt();
        if !(tail_norm > tol) {
            return Err(j);
        }
        let x0 = a[[j, j]];
        let alpha = if x0 >= 0.0 { -tail_norm } else { tail_norm };
        let v0 = x0 - alpha;
        // v = (v0, a[j+1..m, j]); reuse the column storage for the tail.
        let vtv = v0 * v0 + (j + 1..m).map(|i| a[[i, j]] * a[[i, j]]).sum::<f64>();

        for c in j + 1..k {
            let mut s = v0 * a[[j, c]];
            for i in j + 1..m {
                s += a[[i, j]] * a[[i, c]];
            }
            let f = 2.0 * s / vtv;
            a[[j, c]] -= f * v0;
            for i in j + 1..m {
                let vij = a[[i, j]];
                a[[i, c]] -= f * vij;
            }
        }
        {
            let mut s = v0 * b[j];
            for i in j + 1..m {
                s += a[[i, j]] * b[i];
            }
            let f = 2.0 * s / vtv;
            b[j] -= f * v0;
            for i in j + 1..m {
                b[i] -= f * a[[i, j]];
            }
        }
        a[[j, j]] = alpha;
    }

    let mut r = Array2::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            r[[i, j]] = a[[i, j]];
        }
    }
    let coef = back_solve(&r, &b.slice(ndarray::s![..k]).to_owned());
    Ok(QrSolution { coef, r })
}

/// Solve `R x = y` for upper-triangular `R`.
fn back_solve(r: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
    let k = y.len();
    let mut x = Array1::zeros(k);
    for i in (0..k).rev() {
        let mut s = y[i];
        for j in i + 1..k {
            s -= r[[i, j]] * x[j];
        }
        x[i] = s / r[[i, i]];
    }
    x
}

/// Invert an upper-triangular matrix by back substitution on each unit vector.
pub fn inv_upper_triangular(r: &Array2<f64>) -> Array2<f64> {
    let k = r.nrows();
    let mut inv = Array2::zeros((k, k));
    for c in 0..k {
        let mut e = Array1::zeros(k);
        e[c] = 1.0;
        let col = back_solve(r, &e);
        for i in 0..k {
            inv[[i, c]] = col[i];
        }
    }
    inv
}

/// `M M^T`, filled symmetrically (upper computed, lower mirrored bit-exactly).
pub fn sym_outer(m: &Array2<f64>) -> Array2<f64> {
    let k = m.nrows();
    let mut out = Array2::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let s: f64 = (0..m.ncols()).map(|c| m[[i, c]] * m[[j, c]]).sum();
            out[[i, j]] = s;
            out[[j, i]] = s;
        }
    }
    out
}
