//! Closed-form stability bounds.

use crate::error::{LabError, Result};

/// Upper bound on the weighted policy divergence when the demonstrator's
/// dynamics are off by `delta_p` in sup-L1: `2|A| R_max Δ_P / (1 − γ)²`.
pub fn cor1_bound(delta_p: f64, n_actions: usize, r_max: f64, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(LabError::Domain(format!("discount {gamma} must lie in [0, 1)")));
    }
    if delta_p < 0.0 {
        return Err(LabError::Domain(format!("transition gap {delta_p} is negative")));
    }
    Ok(2.0 * n_actions as f64 * r_max * delta_p / (1.0 - gamma).powi(2))
}

/// Upper bound on the weighted policy divergence when the demonstrator
/// discounts with `gamma_star` instead of `gamma_tilde`:
/// `2|A| R_max |γ̃ − γ*| / ((1 − γ̃)(1 − γ*))`.
pub fn cor2_bound(n_actions: usize, r_max: f64, gamma_tilde: f64, gamma_star: f64) -> Result<f64> {
    for g in [gamma_tilde, gamma_star] {
        if !(g > 0.0 && g < 1.0) {
            return Err(LabError::Domain(format!("discount {g} outside (0, 1)")));
        }
    }
    Ok(2.0 * n_actions as f64 * r_max * (gamma_tilde - gamma_star).abs()
        / ((1.0 - gamma_tilde) * (1.0 - gamma_star)))
}

/// `(2 / ĉ) d_w` when the curvature estimate is positive, `None` otherwise.
pub fn theorem2_bound(c_hat: f64, d_weighted: f64) -> Option<f64> {
    (c_hat > 0.0).then(|| 2.0 / c_hat * d_weighted)
}
