//! Grid estimates of strong log-concavity in the reward parameter.
//!
//! For every `(s, a)` and interior grid point the curvature of `ln π(a|s;θ)`
//! is estimated by a second central difference. The estimate `ĉ` is the
//! smallest value of `−∂²/∂θ² ln π`; `ĉ ≤ 0` means the family is not
//! strongly log-concave on the grid.

use ndarray::{Array3, Axis};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::planner::PolicyFamily;
use crate::reward::ThetaGrid;

/// Log-probabilities indexed `(theta_index, state, action)`. Rows need not
/// be normalized, which lets synthetic test families be expressed directly.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbTable {
    pub theta_grid: ThetaGrid,
    pub log_probs: Array3<f64>,
}

impl LogProbTable {
    pub fn new(theta_grid: ThetaGrid, log_probs: Array3<f64>) -> Result<Self> {
        theta_grid.check()?;
        if log_probs.dim().0 != theta_grid.resolution {
            return Err(LabError::Domain(format!(
                "table has {} θ slices, grid has {}",
                log_probs.dim().0,
                theta_grid.resolution
            )));
        }
        Ok(Self {
            theta_grid,
            log_probs,
        })
    }

    pub fn from_family(family: &PolicyFamily) -> Result<Self> {
        if let Some(((i, s, a), _)) = family.probs().indexed_iter().find(|(_, &p)| !(p > 0.0)) {
            return Err(LabError::Domain(format!(
                "π(a={a}|s={s}; θ_{i}) is zero; its logarithm is undefined"
            )));
        }
        Self::new(*family.theta_grid(), family.probs().mapv(f64::ln))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub state: usize,
    pub action: usize,
    pub theta_index: usize,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcavityEstimate {
    pub c_hat: f64,
    /// Every `(s, a, θ)` attaining `ĉ`.
    pub witnesses: Vec<Witness>,
}

impl ConcavityEstimate {
    /// Strong log-concavity holds on the grid.
    pub fn holds(&self) -> bool {
        self.c_hat > 0.0
    }
}

pub fn estimate_concavity(pi: &PolicyFamily) -> Result<ConcavityEstimate> {
    estimate_concavity_table(&LogProbTable::from_family(pi)?)
}

pub fn estimate_concavity_table(table: &LogProbTable) -> Result<ConcavityEstimate> {
    let grid = table.theta_grid;
    if grid.resolution < 3 {
        return Err(LabError::Domain(format!(
            "curvature needs at least 3 grid points, got {}",
            grid.resolution
        )));
    }
    if let Some(bad) = table.log_probs.iter().find(|x| !x.is_finite()) {
        return Err(LabError::Domain(format!("log-probability {bad} is not finite")));
    }
    let h2 = grid.step() * grid.step();
    let (_, n_states, n_actions) = table.log_probs.dim();
    let mut curvatures = Vec::with_capacity((grid.resolution - 2) * n_states * n_actions);
    for i in 1..grid.resolution - 1 {
        let below = table.log_probs.index_axis(Axis(0), i - 1);
        let here = table.log_probs.index_axis(Axis(0), i);
        let above = table.log_probs.index_axis(Axis(0), i + 1);
        for s in 0..n_states {
            for a in 0..n_actions {
                let second = below[[s, a]] - 2.0 * here[[s, a]] + above[[s, a]];
                curvatures.push(Witness {
                    state: s,
                    action: a,
                    theta_index: i,
                    curvature: -second / h2,
                });
            }
        }
    }
    let c_hat = curvatures
        .iter()
        .map(|w| w.curvature)
        .fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * c_hat.abs().max(1.0);
    let witnesses = curvatures
        .into_iter()
        .filter(|w| w.curvature <= c_hat + slack)
        .collect();
    Ok(ConcavityEstimate { c_hat, witnesses })
}

/// Two actions at one state: `up` with logit `max(θ, 10 − θ)` and an
/// alternative worth 6, so `up` is optimal on `[0, 4] ∪ [6, 10]` only.
pub fn kinked_two_action_family(resolution: usize) -> Result<PolicyFamily> {
    let grid = ThetaGrid::new(0.0, 10.0, resolution)?;
    let mut probs = Array3::zeros((resolution, 1, 2));
    for i in 0..resolution {
        let theta = grid.value(i);
        let up = theta.max(10.0 - theta);
        let alt = 6.0;
        let m = up.max(alt);
        let z = (up - m).exp() + (alt - m).exp();
        probs[[i, 0, 0]] = (up - m).exp() / z;
        probs[[i, 0, 1]] = (alt - m).exp() / z;
    }
    PolicyFamily::new(grid, probs)
}

/// `ln π(a|s;θ) = −(c/2)(θ − μ_a)²` with a distinct centre per action.
pub fn quadratic_table(theta_grid: ThetaGrid, curvature: f64, n_actions: usize) -> Result<LogProbTable> {
    let mut logs = Array3::zeros((theta_grid.resolution, 1, n_actions));
    let span = theta_grid.upper - theta_grid.lower;
    for i in 0..theta_grid.resolution {
        let theta = theta_grid.value(i);
        for a in 0..n_actions {
            let centre = theta_grid.lower + span * (a as f64 + 0.5) / n_actions as f64;
            logs[[i, 0, a]] = -0.5 * curvature * (theta - centre).powi(2);
        }
    }
    LogProbTable::new(theta_grid, logs)
}
