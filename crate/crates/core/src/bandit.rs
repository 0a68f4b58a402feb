//! Continuous-action bandit where a tiny policy perturbation flips the
//! maximum-likelihood reward estimate from one end of Θ to the other.
//!
//! Reward: `r(a; θ) = a^θ (1 − a)^{1−θ}` on `a ∈ [0, 1]`. The learner's
//! model is `π̃(a; θ) ∝ exp r(a; θ)`. The demonstrator `π*` equals the model
//! except for `θ` below a threshold, where the weight of a narrow ball of
//! width `δ` around each dataset action is multiplied by a large boost.
//!
//! Densities live on a nonuniform action grid: the uniform base grid plus
//! extra nodes inside each ball. Ball edges appear twice, once with the
//! outside value and once with the inside value, so the trapezoid rule
//! integrates the piecewise density without smearing the jump.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::concavity::{estimate_concavity_table, ConcavityEstimate, LogProbTable};
use crate::error::{LabError, Result};
use crate::inference::mle_infer;
use crate::reward::ThetaGrid;

pub const MIN_ACTION_RESOLUTION: usize = 1024;

/// Extra nodes placed strictly inside each ball.
const BALL_NODES: usize = 16;

/// Narrowest ball the demo will try. Below this the edges collapse onto the
/// dataset action in double precision.
pub const MIN_DELTA: f64 = 64.0 * f64::EPSILON;

const BISECTION_STEPS: usize = 60;

/// `a^θ (1 − a)^{1−θ}` with `0⁰ = 1`.
pub fn bandit_reward(a: f64, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) {
        return Err(LabError::Domain(format!("action {a} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(LabError::Domain(format!("theta {theta} outside [0, 1]")));
    }
    Ok(reward_unchecked(a, theta))
}

fn reward_unchecked(a: f64, theta: f64) -> f64 {
    // f64::powf already returns 1 for 0^0.
    a.powf(theta) * (1.0 - a).powf(1.0 - theta)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanditInstance {
    /// Points in the uniform base action grid over [0, 1].
    pub action_resolution: usize,
    pub theta_grid: ThetaGrid,
    /// Width of the boosted interval `(a − δ/2, a + δ/2)` around each dataset action.
    pub delta: f64,
    pub boost: f64,
    pub theta_threshold: f64,
    pub dataset: Vec<f64>,
}

impl Default for BanditInstance {
    fn default() -> Self {
        let action_resolution = 4096;
        Self {
            action_resolution,
            theta_grid: ThetaGrid {
                lower: 0.0005,
                upper: 0.9995,
                resolution: 1000,
            },
            delta: 1e-4,
            boost: 1e9,
            theta_threshold: 0.001,
            // The last interior node of the base grid. Exactly a = 1 pays
            // r = 0 for every θ < 1, and the normalizer is symmetric under
            // θ ↦ 1 − θ, so a = 1 alone cannot separate the two ends of Θ.
            dataset: vec![(action_resolution - 2) as f64 / (action_resolution - 1) as f64],
        }
    }
}

impl BanditInstance {
    pub fn check(&self) -> Result<()> {
        if self.action_resolution < MIN_ACTION_RESOLUTION {
            return Err(LabError::Domain(format!(
                "action grid needs at least {MIN_ACTION_RESOLUTION} points, got {}",
                self.action_resolution
            )));
        }
        self.theta_grid.check()?;
        if !(self.theta_grid.lower >= 0.0 && self.theta_grid.upper <= 1.0) {
            return Err(LabError::Domain("theta grid must lie inside [0, 1]".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LabError::Domain(format!("ball width {} outside (0, 1)", self.delta)));
        }
        if !(self.boost > 0.0 && self.boost.is_finite()) {
            return Err(LabError::Domain(format!("boost {} must be positive", self.boost)));
        }
        if self.dataset.is_empty() {
            return Err(LabError::Domain("dataset is empty".into()));
        }
        if let Some(a) = self.dataset.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(LabError::Domain(format!("dataset action {a} outside [0, 1]")));
        }
        let mut sorted = self.dataset.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[1] - w[0] <= self.delta) {
            return Err(LabError::Domain("boosted balls around dataset actions overlap".into()));
        }
        Ok(())
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    fn in_ball(&self, a: f64) -> bool {
        self.dataset
            .iter()
            .any(|&d| a > d - self.delta / 2.0 && a < d + self.delta / 2.0)
    }

    /// The refined action grid shared by the model and adversarial tables.
    pub fn action_grid(&self) -> ActionGrid {
        // (position, order among equal positions, inside the ball)
        let mut nodes: Vec<(f64, u8, bool)> = Vec::new();
        let m = self.action_resolution;
        for k in 0..m {
            let a = if k + 1 == m {
                1.0
            } else {
                k as f64 / (m - 1) as f64
            };
            nodes.push((a, 1, self.in_ball(a)));
        }
        for &d in &self.dataset {
            let lo = d - self.delta / 2.0;
            let hi = d + self.delta / 2.0;
            if lo > 0.0 {
                nodes.push((lo, 0, false));
                nodes.push((lo, 2, true));
            }
            if hi < 1.0 {
                nodes.push((hi, 0, true));
                nodes.push((hi, 2, false));
            }
            nodes.push((d, 1, true));
            let (a0, a1) = (lo.max(0.0), hi.min(1.0));
            for j in 1..=BALL_NODES {
                let a = a0 + (a1 - a0) * j as f64 / (BALL_NODES + 1) as f64;
                if a > lo && a < hi {
                    nodes.push((a, 1, true));
                }
            }
        }
        nodes.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        nodes.dedup_by(|x, y| x.0 == y.0 && x.2 == y.2);
        ActionGrid {
            points: nodes.iter().map(|n| n.0).collect(),
            in_ball: nodes.iter().map(|n| n.2).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    /// Nondecreasing; a position repeats only at a ball edge.
    pub points: Vec<f64>,
    pub in_ball: Vec<bool>,
}

impl ActionGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoid rule over the grid.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        let values: Vec<f64> = values.into_iter().collect();
        self.points
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, f)| (x[1] - x[0]) * (f[0] + f[1]) / 2.0)
            .sum()
    }

    /// Index of the node at `a` lying inside the ball (or the only node there).
    pub fn index_of(&self, a: f64) -> Option<usize> {
        let matches: Vec<usize> = (0..self.points.len()).filter(|&i| self.points[i] == a).collect();
        matches
            .iter()
            .copied()
            .find(|&i| self.in_ball[i])
            .or_else(|| matches.first().copied())
    }
}

/// Densities indexed `(theta_index, action_node)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub theta_grid: ThetaGrid,
    pub actions: ActionGrid,
    pub density: Array2<f64>,
}

impl DensityTable {
    pub fn density_at(&self, theta_index: usize, action: f64) -> Option<f64> {
        self.actions
            .index_of(action)
            .map(|j| self.density[[theta_index, j]])
    }

    pub fn slice_mass(&self, theta_index: usize) -> f64 {
        self.actions.integrate(self.density.row(theta_index).iter().copied())
    }

    /// Log-densities as a one-state table for curvature estimates.
    pub fn log_table(&self) -> Result<LogProbTable> {
        let (n_theta, n_actions) = self.density.dim();
        let logs = self
            .density
            .mapv(f64::ln)
            .into_shape_with_order((n_theta, 1, n_actions))
            .map_err(|e| LabError::Numeric(e.to_string()))?;
        LogProbTable::new(self.theta_grid, logs)
    }
}

fn build_table(instance: &BanditInstance, boosted: bool) -> Result<DensityTable> {
    instance.check()?;
    let actions = instance.action_grid();
    let grid = instance.theta_grid;
    let rows: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let theta = grid.value(i);
            let boost_slice = boosted && theta < instance.theta_threshold;
            let weights: Vec<f64> = actions
                .points
                .iter()
                .zip(&actions.in_ball)
                .map(|(&a, &inside)| {
                    let w = reward_unchecked(a, theta).exp();
                    if boost_slice && inside {
                        w * instance.boost
                    } else {
                        w
                    }
                })
                .collect();
            let z = actions.integrate(weights.iter().copied());
            weights.into_iter().map(|w| w / z).collect()
        })
        .collect();
    let mut density = Array2::zeros((grid.len(), actions.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, p) in row.into_iter().enumerate() {
            density[[i, j]] = p;
        }
    }
    Ok(DensityTable {
        theta_grid: grid,
        actions,
        density,
    })
}

/// The learner's model `π̃(a; θ) ∝ exp r(a; θ)`, normalized per θ.
pub fn build_model_density(instance: &BanditInstance) -> Result<DensityTable> {
    build_table(instance, false)
}

/// The demonstrator: the model with its weight boosted inside the dataset
/// balls for every θ below the threshold.
pub fn build_adversarial_density(instance: &BanditInstance) -> Result<DensityTable> {
    build_table(instance, true)
}

/// `max_θ ∫ p ln(p/q)` by the trapezoid rule on the shared grid.
pub fn worst_case_kl(p: &DensityTable, q: &DensityTable) -> Result<f64> {
    if p.actions != q.actions || p.theta_grid != q.theta_grid {
        return Err(LabError::Domain("density tables live on different grids".into()));
    }
    let kls: Vec<f64> = (0..p.theta_grid.len())
        .into_par_iter()
        .map(|i| {
            let integrand = p
                .density
                .row(i)
                .iter()
                .zip(q.density.row(i).iter())
                .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
                .collect::<Vec<_>>();
            p.actions.integrate(integrand)
        })
        .collect();
    Ok(kls.into_iter().fold(0.0, f64::max))
}

/// `d_wc` between the demonstrator and the model for one instance.
pub fn instance_divergence(instance: &BanditInstance) -> Result<f64> {
    let model = build_model_density(instance)?;
    let adversarial = build_adversarial_density(instance)?;
    worst_case_kl(&adversarial, &model)
}

fn dataset_nll_curve(table: &DensityTable, dataset: &[f64]) -> Result<Vec<f64>> {
    let cols = dataset
        .iter()
        .map(|&a| {
            table
                .actions
                .index_of(a)
                .ok_or_else(|| LabError::Numeric(format!("dataset action {a} is not a grid node")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..table.theta_grid.len())
        .map(|i| {
            cols.iter()
                .map(|&j| -table.density[[i, j]].ln())
                .sum::<f64>()
                / cols.len() as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub epsilon: f64,
    pub delta: f64,
    pub boost: f64,
    pub d_wc: f64,
    /// MLE of the dataset under the demonstrator.
    pub theta_star: f64,
    /// MLE of the dataset under the learner's model.
    pub theta_hat: f64,
    pub sq_error: f64,
    /// `½ sup_{θ,θ'} (θ − θ')²` over the grid.
    pub half_diameter_sq: f64,
    pub diameter_bound_ok: bool,
    /// Every dataset action is a mode of the demonstrator at `theta_star`.
    pub likely_generates: bool,
}

impl DemoReport {
    pub const CSV_HEADER: &'static str =
        "epsilon,delta,boost,d_wc,theta_star,theta_hat,sq_error,half_diameter_sq,diameter_bound_ok,likely_generates";

    /// `d_wc < ε` and the inference error exceeds half the squared diameter.
    pub fn success(&self) -> bool {
        self.d_wc < self.epsilon && self.diameter_bound_ok
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epsilon,
            self.delta,
            self.boost,
            self.d_wc,
            self.theta_star,
            self.theta_hat,
            self.sq_error,
            self.half_diameter_sq,
            self.diameter_bound_ok,
            self.likely_generates
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "worst-case divergence {:.3e} (< {} : {})\n\
             ball width δ = {:.3e}, boost = {:e}\n\
             demonstrator MLE θ* = {}\n\
             model MLE θ̂ = {}\n\
             squared error {:.6} vs half squared diameter {:.6} : {}\n\
             dataset is the demonstrator's mode at θ*: {}\n",
            self.d_wc,
            self.epsilon,
            self.d_wc < self.epsilon,
            self.delta,
            self.boost,
            self.theta_star,
            self.theta_hat,
            self.sq_error,
            self.half_diameter_sq,
            self.diameter_bound_ok,
            self.likely_generates
        )
    }
}

/// Picks the widest ball whose worst-case divergence stays below `epsilon`
/// (bisection in log δ), then compares the demonstrator and model MLEs.
pub fn run_demo(instance: &BanditInstance, epsilon: f64) -> Result<DemoReport> {
    if !(epsilon > 0.0) {
        return Err(LabError::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    instance.check()?;
    let delta = choose_delta(instance, epsilon)?;
    let chosen = instance.with_delta(delta);
    let model = build_model_density(&chosen)?;
    let adversarial = build_adversarial_density(&chosen)?;
    let d_wc = worst_case_kl(&adversarial, &model)?;

    let grid = chosen.theta_grid;
    let star = mle_infer(&dataset_nll_curve(&adversarial, &chosen.dataset)?, &grid, 0.0)?;
    let theta_star = star.theta_hat;
    let hat = mle_infer(&dataset_nll_curve(&model, &chosen.dataset)?, &grid, theta_star)?;
    let half_diameter_sq = 0.5 * (grid.upper - grid.lower).powi(2);

    let mode = adversarial
        .density
        .row(star.theta_hat_index)
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let likely_generates = chosen.dataset.iter().all(|&a| {
        adversarial
            .density_at(star.theta_hat_index, a)
            .is_some_and(|p| p >= mode)
    });

    Ok(DemoReport {
        epsilon,
        delta,
        boost: chosen.boost,
        d_wc,
        theta_star,
        theta_hat: hat.theta_hat,
        sq_error: hat.sq_error,
        half_diameter_sq,
        diameter_bound_ok: hat.sq_error > half_diameter_sq,
        likely_generates,
    })
}

fn choose_delta(instance: &BanditInstance, epsilon: f64) -> Result<f64> {
    let widest = instance.delta;
    if instance_divergence(&instance.with_delta(widest))? < epsilon {
        return Ok(widest);
    }
    if instance_divergence(&instance.with_delta(MIN_DELTA))? >= epsilon {
        return Err(LabError::Numeric(format!(
            "no ball width in [{MIN_DELTA:e}, {widest:e}] keeps the divergence below {epsilon}"
        )));
    }
    let (mut good, mut bad) = (MIN_DELTA.ln(), widest.ln());
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (good + bad);
        if instance_divergence(&instance.with_delta(mid.exp()))? < epsilon {
            good = mid;
        } else {
            bad = mid;
        }
        if bad - good < 1e-6 {
            break;
        }
    }
    Ok(good.exp())
}

/// Curvature of the demonstrator's log-density in θ.
pub fn adversarial_concavity(instance: &BanditInstance) -> Result<ConcavityEstimate> {
    estimate_concavity_table(&build_adversarial_density(instance)?.log_table()?)
}
