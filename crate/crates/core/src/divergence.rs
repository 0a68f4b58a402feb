//! KL divergences between demonstrator and model policies.

use ndarray::{Array1, ArrayView1};

use crate::error::{LabError, Result};
use crate::planner::{OccupancyMeasure, PolicyFamily};

/// Inputs to [`kl_discrete`] must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-9;

fn check_distribution(name: &str, p: ArrayView1<'_, f64>) -> Result<()> {
    if let Some(bad) = p.iter().find(|&&x| x < 0.0 || !x.is_finite()) {
        return Err(LabError::Domain(format!("{name} has entry {bad}")));
    }
    let sum = p.sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(LabError::Domain(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ p ln(p/q)`, with `0 ln 0 = 0` and `+∞` when `q` misses
/// mass that `p` has.
pub fn kl_discrete(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> Result<f64> {
    if p.len() != q.len() {
        return Err(LabError::Domain(format!(
            "supports differ: {} vs {} outcomes",
            p.len(),
            q.len()
        )));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    let mut total = 0.0;
    for (&pa, &qa) in p.iter().zip(q.iter()) {
        if pa == 0.0 {
            continue;
        }
        if qa == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += pa * (pa / qa).ln();
    }
    // Rounding can leave a tiny negative sum when p ≈ q.
    Ok(total.max(0.0))
}

/// Weighted divergence, its per-state terms and the worst case.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub d_weighted: f64,
    pub d_worstcase: f64,
    /// `KL(π*(·|s;θ*) ‖ π̃(·|s;θ*))` for every state.
    pub per_state_kl: Array1<f64>,
    pub delta_p: Option<f64>,
    pub bound_cor1: Option<f64>,
    pub bound_cor2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDivergence {
    pub d_weighted: f64,
    pub per_state_kl: Array1<f64>,
}

fn check_pair(pi_star: &PolicyFamily, pi_tilde: &PolicyFamily) -> Result<()> {
    if !pi_star.compatible_with(pi_tilde) {
        return Err(LabError::Domain(
            "demonstrator and model families have different grids or shapes".into(),
        ));
    }
    Ok(())
}

/// `Σ_s w*(s) KL(π*(·|s;θ*) ‖ π̃(·|s;θ*))`. States with zero occupancy
/// contribute nothing even when their KL is infinite.
pub fn weighted_divergence(
    pi_star: &PolicyFamily,
    pi_tilde: &PolicyFamily,
    w_star: &OccupancyMeasure,
    theta_star_index: usize,
) -> Result<WeightedDivergence> {
    check_pair(pi_star, pi_tilde)?;
    if theta_star_index >= pi_star.n_thetas() {
        return Err(LabError::Domain(format!("theta index {theta_star_index} out of range")));
    }
    if w_star.len() != pi_star.n_states() {
        return Err(LabError::Domain(format!(
            "occupancy has {} states, policies have {}",
            w_star.len(),
            pi_star.n_states()
        )));
    }
    let per_state_kl = (0..pi_star.n_states())
        .map(|s| {
            kl_discrete(
                pi_star.row(theta_star_index, s),
                pi_tilde.row(theta_star_index, s),
            )
        })
        .collect::<Result<Array1<f64>>>()?;
    let d_weighted = w_star
        .w
        .iter()
        .zip(per_state_kl.iter())
        .filter(|(&w, _)| w > 0.0)
        .map(|(&w, &kl)| w * kl)
        .sum();
    Ok(WeightedDivergence {
        d_weighted,
        per_state_kl,
    })
}

/// `max_θ max_s KL(π*(·|s;θ) ‖ π̃(·|s;θ))` over the shared grid.
pub fn worstcase_divergence(pi_star: &PolicyFamily, pi_tilde: &PolicyFamily) -> Result<f64> {
    check_pair(pi_star, pi_tilde)?;
    let mut worst = 0.0_f64;
    for i in 0..pi_star.n_thetas() {
        for s in 0..pi_star.n_states() {
            let kl = kl_discrete(pi_star.row(i, s), pi_tilde.row(i, s))?;
            worst = worst.max(kl);
        }
    }
    Ok(worst)
}
