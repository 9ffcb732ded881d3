//! Scalar numeric helpers shared across the crate.
//!
//! Everything here is branch-stable for extreme arguments: `expit` never
//! overflows, `softplus` is exact in both tails, and `log_expit` avoids the
//! catastrophic cancellation of `ln(expit(t))` for large negative `t`.

/// Inverse logit, `1 / (1 + exp(-t))`, computed without overflow.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(t))`, exact in both tails.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() }
}

/// `ln(expit(t))`, stable for large negative `t` where `expit(t)` underflows.
pub fn log_expit(t: f64) -> f64 {
    -softplus(-t)
}

/// Log odds of a probability in (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Derivative of `expit` at `t`: `expit(t) * expit(-t)`.
///
/// Written as a product of two sigmoids so it stays positive (no rounding to
/// zero) for |t| up to ~700, unlike `p * (1 - p)` which dies near |t| = 37.
pub fn expit_deriv(t: f64) -> f64 {
    expit(t) * expit(-t)
}
