//! Maximum-likelihood reward inference over a θ grid.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::mdp::TabularMdp;
use crate::planner::{occupancy, OccupancyMeasure, PolicyFamily};
use crate::reward::ThetaGrid;

/// Grid losses closer than this count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// One demonstration: `(state, action)`.
pub type Observation = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub theta_hat: f64,
    pub theta_hat_index: usize,
    pub loss_curve: Vec<f64>,
    /// False when another grid point ties the minimum.
    pub unique: bool,
    pub theta_star: f64,
    /// `(θ̂ − θ*)²`.
    pub sq_error: f64,
}

fn nll_term(p: f64) -> f64 {
    if p > 0.0 {
        -p.ln()
    } else {
        f64::INFINITY
    }
}

/// `Σ_s w*(s) Σ_a π*(a|s;θ*) (−ln π̃(a|s;θ))`: the negative log-likelihood
/// of an infinitely large demonstration set.
pub fn expected_nll(
    pi_tilde: &PolicyFamily,
    pi_star: &PolicyFamily,
    w_star: &OccupancyMeasure,
    theta_star_index: usize,
    theta_index: usize,
) -> Result<f64> {
    if pi_tilde.n_states() != pi_star.n_states() || pi_tilde.n_actions() != pi_star.n_actions() {
        return Err(LabError::Domain("model and demonstrator shapes differ".into()));
    }
    if theta_star_index >= pi_star.n_thetas() || theta_index >= pi_tilde.n_thetas() {
        return Err(LabError::Domain("theta index out of range".into()));
    }
    if w_star.len() != pi_star.n_states() {
        return Err(LabError::Domain("occupancy length differs from state count".into()));
    }
    let mut total = 0.0;
    for (s, &ws) in w_star.w.iter().enumerate() {
        if ws == 0.0 {
            continue;
        }
        let demo = pi_star.row(theta_star_index, s);
        let model = pi_tilde.row(theta_index, s);
        let mut cross = 0.0;
        for (&pd, &pm) in demo.iter().zip(model.iter()) {
            if pd > 0.0 {
                cross += pd * nll_term(pm);
            }
        }
        total += ws * cross;
    }
    Ok(total)
}

/// [`expected_nll`] at every grid point of the model family.
pub fn expected_loss_curve(
    pi_tilde: &PolicyFamily,
    pi_star: &PolicyFamily,
    w_star: &OccupancyMeasure,
    theta_star_index: usize,
) -> Result<Vec<f64>> {
    (0..pi_tilde.n_thetas())
        .map(|i| expected_nll(pi_tilde, pi_star, w_star, theta_star_index, i))
        .collect()
}

/// Mean negative log-likelihood of a dataset under every slice of `pi_tilde`.
pub fn empirical_loss_curve(pi_tilde: &PolicyFamily, data: &[Observation]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(LabError::Domain("empty dataset".into()));
    }
    let n = data.len() as f64;
    (0..pi_tilde.n_thetas())
        .map(|i| {
            let mut total = 0.0;
            for &(s, a) in data {
                if s >= pi_tilde.n_states() || a >= pi_tilde.n_actions() {
                    return Err(LabError::Domain(format!("observation ({s}, {a}) out of range")));
                }
                total += nll_term(pi_tilde.row(i, s)[a]);
            }
            Ok(total / n)
        })
        .collect()
}

/// Grid minimizer of a loss curve. Ties resolve to the smallest θ and clear
/// the `unique` flag.
pub fn mle_infer(loss_curve: &[f64], theta_grid: &ThetaGrid, theta_star: f64) -> Result<InferenceResult> {
    if loss_curve.len() != theta_grid.len() {
        return Err(LabError::Domain(format!(
            "loss curve has {} points, grid has {}",
            loss_curve.len(),
            theta_grid.len()
        )));
    }
    if let Some(bad) = loss_curve.iter().find(|x| x.is_nan() || **x == f64::NEG_INFINITY) {
        return Err(LabError::Numeric(format!("loss curve contains {bad}")));
    }
    let (best_index, &best) = loss_curve
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .min_by(|(_, a), (_, b)| a.total_cmp(b))
        .ok_or_else(|| {
            LabError::Numeric("loss is infinite at every grid point; the model covers no data".into())
        })?;
    let ties = loss_curve
        .iter()
        .filter(|l| l.is_finite() && (**l - best).abs() <= TIE_TOL)
        .count();
    // min_by keeps the last of equal elements; resolve ties to the first.
    let theta_hat_index = loss_curve
        .iter()
        .position(|l| l.is_finite() && (*l - best).abs() <= TIE_TOL)
        .unwrap_or(best_index);
    let theta_hat = theta_grid.value(theta_hat_index);
    Ok(InferenceResult {
        theta_hat,
        theta_hat_index,
        loss_curve: loss_curve.to_vec(),
        unique: ties == 1,
        theta_star,
        sq_error: (theta_hat - theta_star).powi(2),
    })
}

/// `n` i.i.d. pairs with `s ~ w*` and `a ~ π*(·|s;θ*)`, where `w*` is the
/// occupancy of `π*(·|·;θ*)` in `mdp`.
pub fn sample_dataset(
    mdp: &TabularMdp,
    pi_star: &PolicyFamily,
    theta_star_index: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Observation>> {
    if n == 0 {
        return Err(LabError::Domain("dataset size must be at least 1".into()));
    }
    if theta_star_index >= pi_star.n_thetas() {
        return Err(LabError::Domain(format!("theta index {theta_star_index} out of range")));
    }
    let w_star = occupancy(mdp, &pi_star.policy(theta_star_index))?;
    sample_from_occupancy(&w_star, pi_star, theta_star_index, n, seed)
}

/// Like [`sample_dataset`] with a precomputed occupancy.
pub fn sample_from_occupancy(
    w_star: &OccupancyMeasure,
    pi_star: &PolicyFamily,
    theta_star_index: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Observation>> {
    if n == 0 {
        return Err(LabError::Domain("dataset size must be at least 1".into()));
    }
    let to_numeric = |e: rand::distr::weighted::Error| LabError::Numeric(e.to_string());
    let states = WeightedIndex::new(w_star.w.iter().copied()).map_err(to_numeric)?;
    let actions = (0..pi_star.n_states())
        .map(|s| WeightedIndex::new(pi_star.row(theta_star_index, s).iter().copied()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(to_numeric)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let s = states.sample(&mut rng);
            (s, actions[s].sample(&mut rng))
        })
        .collect())
}
