//! Soft value iteration, Boltzmann policies and discounted occupancy measures.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::mdp::TabularMdp;
use crate::reward::{RewardModel, ThetaGrid};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Policy rows must sum to one within this tolerance.
pub const POLICY_ROW_TOL: f64 = 1e-12;

/// Balance-equation residual accepted from the occupancy solve.
pub const OCCUPANCY_TOL: f64 = 1e-10;

/// Fixed point of the soft Bellman operator at one θ.
#[derive(Debug, Clone)]
pub struct SoftValues {
    /// Indexed `(state, action)`.
    pub q: Array2<f64>,
    pub v: Array1<f64>,
    pub theta: f64,
    /// Sup-norm change of `q` on the final sweep.
    pub residual: f64,
    pub iterations: usize,
}

/// Numerically stable `log Σ exp(x)`.
pub fn log_sum_exp(xs: ArrayView1<'_, f64>) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Nonzero transition entries per `(state, action)`.
struct SparseDynamics {
    rows: Vec<Vec<(usize, f64)>>,
    n_actions: usize,
}

impl SparseDynamics {
    fn new(mdp: &TabularMdp) -> Self {
        let n_actions = mdp.n_actions();
        let mut rows = Vec::with_capacity(mdp.n_states() * n_actions);
        for s in 0..mdp.n_states() {
            for a in 0..n_actions {
                rows.push(
                    mdp.row(s, a)
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p != 0.0)
                        .map(|(next, &p)| (next, p))
                        .collect(),
                );
            }
        }
        Self { rows, n_actions }
    }

    fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[s * self.n_actions + a]
    }
}

/// One application of the soft Bellman operator to `q`:
/// `Q'(s,a) = r(s) + γ Σ_s' P(s'|s,a) logΣexp Q(s',·)`.
pub fn soft_bellman_update(mdp: &TabularMdp, rewards: &[f64], q: &Array2<f64>) -> Array2<f64> {
    let dynamics = SparseDynamics::new(mdp);
    let v = q.map_axis(Axis(1), log_sum_exp);
    bellman_with(&dynamics, mdp.gamma(), rewards, &v)
}

fn bellman_with(
    dynamics: &SparseDynamics,
    gamma: f64,
    rewards: &[f64],
    v: &Array1<f64>,
) -> Array2<f64> {
    let n_states = rewards.len();
    Array2::from_shape_fn((n_states, dynamics.n_actions), |(s, a)| {
        let expected: f64 = dynamics.row(s, a).iter().map(|&(next, p)| p * v[next]).sum();
        rewards[s] + gamma * expected
    })
}

pub fn soft_value_iteration(
    mdp: &TabularMdp,
    reward: &RewardModel,
    theta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SoftValues> {
    if !(tol > 0.0) {
        return Err(LabError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if reward.n_states() != mdp.n_states() {
        return Err(LabError::Domain(format!(
            "reward model has {} states, MDP has {}",
            reward.n_states(),
            mdp.n_states()
        )));
    }
    if !reward.theta_grid().contains(theta) {
        return Err(LabError::Domain(format!("theta {theta} outside the reward grid")));
    }
    let rewards = reward.state_rewards(theta);
    let dynamics = SparseDynamics::new(mdp);
    let mut q = Array2::<f64>::zeros((mdp.n_states(), mdp.n_actions()));
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        let v = q.map_axis(Axis(1), log_sum_exp);
        let next = bellman_with(&dynamics, mdp.gamma(), &rewards, &v);
        residual = next
            .iter()
            .zip(q.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            let v = q.map_axis(Axis(1), log_sum_exp);
            return Ok(SoftValues {
                q,
                v,
                theta,
                residual,
                iterations: iteration,
            });
        }
    }
    Err(LabError::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// A stationary stochastic policy, indexed `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Array2<f64>,
}

impl Policy {
    /// Wraps a probability table after checking that every row is a distribution.
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        for (s, row) in probs.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(LabError::Domain(format!("policy row {s} has a negative entry")));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > POLICY_ROW_TOL {
                return Err(LabError::Domain(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }
}

/// `π(a|s) = exp(q(s,a) − v(s))`, with `v` recomputed from `q`.
pub fn boltzmann_policy(values: &SoftValues) -> Result<Policy> {
    boltzmann_from_q(values.q.view())
}

pub fn boltzmann_from_q(q: ArrayView2<'_, f64>) -> Result<Policy> {
    if let Some(bad) = q.iter().find(|x| !x.is_finite()) {
        return Err(LabError::Numeric(format!("non-finite Q-value {bad}")));
    }
    let mut probs = Array2::zeros(q.raw_dim());
    for (mut out, row) in probs.axis_iter_mut(Axis(0)).zip(q.axis_iter(Axis(0))) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights = row.mapv(|x| (x - max).exp());
        let total = weights.sum();
        out.assign(&(weights / total));
    }
    Policy::new(probs)
}

/// Reward-conditioned policies for every θ on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFamily {
    theta_grid: ThetaGrid,
    /// Indexed `(theta_index, state, action)`.
    probs: Array3<f64>,
}

impl PolicyFamily {
    pub fn new(theta_grid: ThetaGrid, probs: Array3<f64>) -> Result<Self> {
        if probs.dim().0 != theta_grid.resolution {
            return Err(LabError::Domain(format!(
                "family has {} slices but the grid has {} points",
                probs.dim().0,
                theta_grid.resolution
            )));
        }
        for (i, slice) in probs.axis_iter(Axis(0)).enumerate() {
            Policy::new(slice.to_owned()).map_err(|e| LabError::ThetaSlice {
                index: i,
                source: Box::new(e),
            })?;
        }
        Ok(Self { theta_grid, probs })
    }

    pub fn theta_grid(&self) -> &ThetaGrid {
        &self.theta_grid
    }

    pub fn probs(&self) -> &Array3<f64> {
        &self.probs
    }

    pub fn n_thetas(&self) -> usize {
        self.probs.dim().0
    }

    pub fn n_states(&self) -> usize {
        self.probs.dim().1
    }

    pub fn n_actions(&self) -> usize {
        self.probs.dim().2
    }

    pub fn slice(&self, theta_index: usize) -> ArrayView2<'_, f64> {
        self.probs.index_axis(Axis(0), theta_index)
    }

    /// `π(· | state; θ_index)`.
    pub fn row(&self, theta_index: usize, state: usize) -> ArrayView1<'_, f64> {
        self.probs.slice(ndarray::s![theta_index, state, ..])
    }

    pub fn policy(&self, theta_index: usize) -> Policy {
        Policy {
            probs: self.slice(theta_index).to_owned(),
        }
    }

    /// True when both families are defined over the same θ grid and shapes.
    pub fn compatible_with(&self, other: &PolicyFamily) -> bool {
        self.theta_grid == other.theta_grid && self.probs.dim() == other.probs.dim()
    }
}

/// Soft values at every grid point, solved in parallel.
pub fn solve_family(mdp: &TabularMdp, reward: &RewardModel) -> Result<Vec<SoftValues>> {
    let grid = reward.theta_grid();
    if grid.is_empty() {
        return Err(LabError::Domain("empty theta grid".into()));
    }
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            soft_value_iteration(mdp, reward, grid.value(i), DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(
                |e| LabError::ThetaSlice {
                    index: i,
                    source: Box::new(e),
                },
            )
        })
        .collect()
}

pub fn family_from_values(theta_grid: ThetaGrid, values: &[SoftValues]) -> Result<PolicyFamily> {
    let first = values
        .first()
        .ok_or_else(|| LabError::Domain("no value tables".into()))?;
    let (n_states, n_actions) = first.q.dim();
    let mut probs = Array3::zeros((values.len(), n_states, n_actions));
    for (i, sv) in values.iter().enumerate() {
        let policy = boltzmann_policy(sv).map_err(|e| LabError::ThetaSlice {
            index: i,
            source: Box::new(e),
        })?;
        probs.index_axis_mut(Axis(0), i).assign(&policy.probs);
    }
    PolicyFamily::new(theta_grid, probs)
}

/// Boltzmann policies `π(·|·; θ)` for every θ on the reward model's grid.
pub fn policy_family(mdp: &TabularMdp, reward: &RewardModel) -> Result<PolicyFamily> {
    let values = solve_family(mdp, reward)?;
    family_from_values(*reward.theta_grid(), &values)
}

/// Writes `state,theta,v` rows for every solved θ.
pub fn write_value_csv<W: Write>(out: W, values: &[SoftValues]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let to_io = |e: csv::Error| LabError::Io(e.into());
    writer.write_record(["state", "theta", "v"]).map_err(to_io)?;
    for sv in values {
        for (s, v) in sv.v.iter().enumerate() {
            writer
                .write_record([s.to_string(), sv.theta.to_string(), v.to_string()])
                .map_err(to_io)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Discounted state-visitation distribution `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub w: Array1<f64>,
}

impl OccupancyMeasure {
    pub fn new(w: Array1<f64>) -> Result<Self> {
        if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(LabError::Domain("occupancy has a negative entry".into()));
        }
        let sum = w.sum();
        if (sum - 1.0).abs() > OCCUPANCY_TOL {
            return Err(LabError::Domain(format!("occupancy sums to {sum}")));
        }
        Ok(Self { w })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// State-to-state kernel `P_π(s, s') = Σ_a π(a|s) P(s'|s,a)`.
pub fn state_kernel(mdp: &TabularMdp, policy: &Policy) -> Array2<f64> {
    let n = mdp.n_states();
    let mut kernel = Array2::zeros((n, n));
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.probs[[s, a]];
            if pa == 0.0 {
                continue;
            }
            kernel.row_mut(s).scaled_add(pa, &mdp.row(s, a));
        }
    }
    kernel
}

/// Largest component-wise violation of
/// `w(s) = (1−γ)ρ(s) + γ Σ_{s'} w(s') P_π(s', s)`.
pub fn balance_residual(mdp: &TabularMdp, policy: &Policy, w: &Array1<f64>) -> f64 {
    let kernel = state_kernel(mdp, policy);
    let inflow = kernel.t().dot(w);
    let gamma = mdp.gamma();
    w.iter()
        .zip(inflow.iter())
        .zip(mdp.initial_dist().iter())
        .map(|((&ws, &inf), &rho)| (ws - (1.0 - gamma) * rho - gamma * inf).abs())
        .fold(0.0, f64::max)
}

/// Solves `(I − γ P_πᵀ) w = (1−γ) ρ` directly.
pub fn occupancy(mdp: &TabularMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    let n = mdp.n_states();
    if policy.n_states() != n || policy.n_actions() != mdp.n_actions() {
        return Err(LabError::Domain(format!(
            "policy shape {:?} does not match MDP ({n}, {})",
            policy.probs.dim(),
            mdp.n_actions()
        )));
    }
    let gamma = mdp.gamma();
    let kernel = state_kernel(mdp, policy);
    let system = DMatrix::from_fn(n, n, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        identity - gamma * kernel[[j, i]]
    });
    let rhs = DVector::from_iterator(n, mdp.initial_dist().iter().map(|&r| (1.0 - gamma) * r));
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LabError::Numeric("occupancy system is singular".into()))?;

    let mut w = Array1::from_iter(solution.iter().copied());
    for x in w.iter_mut() {
        if *x < 0.0 {
            if *x < -OCCUPANCY_TOL {
                return Err(LabError::Numeric(format!("occupancy solve produced {x}")));
            }
            *x = 0.0;
        }
    }
    let residual = balance_residual(mdp, policy, &w);
    if residual > OCCUPANCY_TOL {
        return Err(LabError::Numeric(format!(
            "occupancy balance residual {residual:e} exceeds {OCCUPANCY_TOL:e}"
        )));
    }
    OccupancyMeasure::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_gridworld, GridLayout};
    use crate::reward::CellRole;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn single_state(n_actions: usize, gamma: f64, role: CellRole) -> (TabularMdp, RewardModel) {
        let p = Array3::from_elem((1, n_actions, 1), 1.0);
        let mdp = TabularMdp::new(p, gamma, array![1.0], vec![true]).unwrap();
        let reward = RewardModel::new(vec![role], ThetaGrid::new(1.0, 4.0, 4).unwrap()).unwrap();
        (mdp, reward)
    }

    #[test]
    fn single_action_geometric_fixed_point() {
        // The waypoint role pays 1 regardless of θ.
        let (mdp, reward) = single_state(1, 0.5, CellRole::Waypoint);
        let sv = soft_value_iteration(&mdp, &reward, 2.0, 1e-12, 10_000).unwrap();
        assert_abs_diff_eq!(sv.v[0], 2.0, epsilon = 1e-10);
        assert!(sv.residual <= 1e-12);
    }

    #[test]
    fn two_action_symmetric_fixed_point() {
        let (mdp, reward) = single_state(2, 0.5, CellRole::Empty);
        let sv = soft_value_iteration(&mdp, &reward, 2.0, 1e-12, 10_000).unwrap();
        assert_abs_diff_eq!(sv.v[0], 2.0 * 2f64.ln(), epsilon = 1e-10);
        for (s, v) in sv.v.iter().enumerate() {
            assert_abs_diff_eq!(*v, log_sum_exp(sv.q.row(s)), epsilon = 1e-9);
        }
    }

    #[test]
    fn non_convergence_carries_residual() {
        let (mdp, reward) = single_state(2, 0.5, CellRole::Empty);
        match soft_value_iteration(&mdp, &reward, 2.0, 1e-12, 3) {
            Err(LabError::NoConvergence { iterations: 3, residual }) => assert!(residual > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(soft_value_iteration(&mdp, &reward, 2.0, 0.0, 3).is_err());
        assert!(soft_value_iteration(&mdp, &reward, 5.0, 1e-9, 3).is_err());
    }

    #[test]
    fn softmax_rows() {
        let p = boltzmann_from_q(array![[0.0, 0.0]].view()).unwrap();
        assert_abs_diff_eq!(p.probs()[[0, 0]], 0.5, epsilon = 1e-15);
        let p = boltzmann_from_q(array![[2f64.ln(), 0.0]].view()).unwrap();
        assert_abs_diff_eq!(p.probs()[[0, 0]], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.probs()[[0, 1]], 1.0 / 3.0, epsilon = 1e-15);
        let p = boltzmann_from_q(array![[1.0, 2.0, 3.0]].view()).unwrap();
        // e^{k} / (e + e² + e³) evaluated independently.
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (k, expected) in [0.0900, 0.2447, 0.6652].into_iter().enumerate() {
            assert_abs_diff_eq!(p.probs()[[0, k]], expected, epsilon = 1e-4);
            assert_abs_diff_eq!(p.probs()[[0, k]], ((k + 1) as f64).exp() / z, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = boltzmann_from_q(array![[1000.0, 999.0]].view()).unwrap();
        assert!(p.probs().iter().all(|x| x.is_finite() && *x > 0.0));
        assert!(boltzmann_from_q(array![[f64::NAN, 0.0]].view()).is_err());
        assert!(boltzmann_from_q(array![[f64::INFINITY, 0.0]].view()).is_err());
    }

    #[test]
    fn family_has_one_slice_per_grid_point() {
        let layout = GridLayout::builtin("A").unwrap();
        let (mdp, reward) = build_gridworld(&layout).unwrap();
        let family = policy_family(&mdp, &reward).unwrap();
        assert_eq!(family.n_thetas(), 64);
        let reward2 = reward.with_theta_grid(ThetaGrid::new(1.0, 4.0, 2).unwrap()).unwrap();
        let family2 = policy_family(&mdp, &reward2).unwrap();
        assert_eq!(family2.n_thetas(), 2);
        for i in 0..2 {
            for s in 0..mdp.n_states() {
                assert_abs_diff_eq!(family2.row(i, s).sum(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_absorbing_state_occupancy() {
        let (mdp, _) = single_state(3, 0.9, CellRole::Goal);
        let policy = Policy::new(Array2::from_elem((1, 3), 1.0 / 3.0)).unwrap();
        let occ = occupancy(&mdp, &policy).unwrap();
        assert_abs_diff_eq!(occ.w[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn two_state_cycle_occupancy() {
        let mut p = Array3::zeros((2, 1, 2));
        p[[0, 0, 1]] = 1.0;
        p[[1, 0, 0]] = 1.0;
        let mdp = TabularMdp::new(p, 0.5, array![1.0, 0.0], vec![false, false]).unwrap();
        let policy = Policy::new(array![[1.0], [1.0]]).unwrap();
        let occ = occupancy(&mdp, &policy).unwrap();
        assert_abs_diff_eq!(occ.w[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(occ.w[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn occupancy_rejects_mismatched_policy() {
        let (mdp, _) = single_state(3, 0.9, CellRole::Goal);
        let policy = Policy::new(Array2::from_elem((1, 2), 0.5)).unwrap();
        assert!(occupancy(&mdp, &policy).is_err());
        assert!(Policy::new(array![[0.5, 0.4]]).is_err());
    }

    #[test]
    fn value_csv_has_header_and_rows() {
        let (mdp, reward) = single_state(2, 0.5, CellRole::Goal);
        let values = solve_family(&mdp, &reward).unwrap();
        let mut buf = Vec::new();
        write_value_csv(&mut buf, &values).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("state,theta,v\n"));
        assert_eq!(text.lines().count(), 1 + 4);
    }
}
