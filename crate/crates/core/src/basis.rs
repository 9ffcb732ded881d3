//! Cubic B-spline bases on data-driven knots, with a curvature penalty.
//!
//! Knots sit at empirical quantiles, so spacing is uneven; the penalty is
//! therefore built from second *divided* differences over the Greville sites.
//! Its null space is then coefficient sequences linear in the site positions,
//! which the Greville identity maps to functions exactly linear in x — so an
//! infinitely penalized smooth degrades to a straight line in x, not to a
//! line in knot index.

use ndarray::Array2;

use crate::error::{Error, Result};

const DEGREE: usize = 3;

#[derive(Debug, Clone)]
pub struct SplineBasis {
    /// Clamped knot vector: `lo` and `hi` repeated DEGREE+1 times around the
    /// strictly increasing interior knots.
    knots: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl SplineBasis {
    /// Basis over the range of `values`, with up to `n_interior` knots at the
    /// empirical quantiles (collapsed where ties leave no room).
    pub fn from_values(values: &[f64], n_interior: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateData("no values to place knots on".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        if !(hi > lo) {
            return Err(Error::DegenerateData(
                "column is constant; a spline basis needs spread".into(),
            ));
        }
        let gap_tol = 1e-10 * (hi - lo);

        let mut interior = Vec::with_capacity(n_interior);
        let mut last = lo;
        for i in 1..=n_interior {
            let q = quantile(&sorted, i as f64 / (n_interior + 1) as f64);
            if q > last + gap_tol && q < hi - gap_tol {
                interior.push(q);
                last = q;
            }
        }

        let mut knots = Vec::with_capacity(interior.len() + 2 * (DEGREE + 1));
        knots.extend(std::iter::repeat_n(lo, DEGREE + 1));
        knots.extend(interior);
        knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
        Ok(SplineBasis { knots, lo, hi })
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    /// Write the basis row for `x` into `out` (length `len()`). Points
    /// outside the knot range are clamped to its endpoints.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        out.fill(0.0);
        let x = x.clamp(self.lo, self.hi);
        let span = self.find_span(x);

        // Cox-de Boor triangle for the DEGREE+1 functions alive on this span.
        let mut n = [0.0f64; DEGREE + 1];
        let mut left = [0.0f64; DEGREE + 1];
        let mut right = [0.0f64; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (j, &v) in n.iter().enumerate() {
            out[span - DEGREE + j] = v;
        }
    }

    fn find_span(&self, x: f64) -> usize {
        let k = self.len();
        if x >= self.knots[k] {
            return k - 1; // right boundary: last non-empty span
        }
        // Invariant: knots[lo_idx] <= x < knots[hi_idx].
        let mut lo_idx = DEGREE;
        let mut hi_idx = k;
        while hi_idx - lo_idx > 1 {
            let mid = (lo_idx + hi_idx) / 2;
            if x < self.knots[mid] {
                hi_idx = mid;
            } else {
                lo_idx = mid;
            }
        }
        lo_idx
    }

    /// Greville abscissae: per-function averages of DEGREE consecutive knots.
    /// Strictly increasing for a clamped vector with distinct interior knots.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.len())
            .map(|j| (1..=DEGREE).map(|d| self.knots[j + d]).sum::<f64>() / DEGREE as f64)
            .collect()
    }

    /// Second-divided-difference penalty rows, (len-2) x len, scaled by the
    /// squared mean site spacing so the magnitude is comparable across
    /// covariates measured on different scales.
    pub fn curvature_penalty(&self) -> Array2<f64> {
        let t = self.greville();
        let k = t.len();
        let mean_gap = (t[k - 1] - t[0]) / (k - 1) as f64;
        let scale = mean_gap * mean_gap;
        let mut d = Array2::zeros((k - 2, k));
        for j in 0..k - 2 {
            let g0 = t[j + 1] - t[j];
            let g1 = t[j + 2] - t[j + 1];
            d[[j, j]] = scale / (g0 * (g0 + g1));
            d[[j, j + 1]] = -scale / (g0 * g1);
            d[[j, j + 2]] = scale / (g1 * (g0 + g1));
        }
        d
    }
}

/// Linear-interpolation sample quantile on a pre-sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}
