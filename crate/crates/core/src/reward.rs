//! Role-labeled rewards with a single scalar parameter θ.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// What a gridworld cell is. Also used as the per-state reward label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellRole {
    Start,
    Goal,
    Waypoint,
    Lava,
    Wall,
    Empty,
}

impl CellRole {
    pub fn from_char(c: char) -> Option<Self> {
        Some(match c {
            'S' => CellRole::Start,
            'G' => CellRole::Goal,
            'W' => CellRole::Waypoint,
            'L' => CellRole::Lava,
            '#' => CellRole::Wall,
            '.' => CellRole::Empty,
            _ => return None,
        })
    }

    pub fn to_char(self) -> char {
        match self {
            CellRole::Start => 'S',
            CellRole::Goal => 'G',
            CellRole::Waypoint => 'W',
            CellRole::Lava => 'L',
            CellRole::Wall => '#',
            CellRole::Empty => '.',
        }
    }

    /// Goal, waypoint and lava end the episode in place.
    pub fn is_absorbing(self) -> bool {
        matches!(self, CellRole::Goal | CellRole::Waypoint | CellRole::Lava)
    }
}

/// Uniform grid `lower, lower + h, ..., upper` with `resolution` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub lower: f64,
    pub upper: f64,
    pub resolution: usize,
}

impl ThetaGrid {
    pub fn new(lower: f64, upper: f64, resolution: usize) -> Result<Self> {
        let grid = Self {
            lower,
            upper,
            resolution,
        };
        grid.check()?;
        Ok(grid)
    }

    pub fn check(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(LabError::Domain(format!(
                "theta grid needs at least 2 points, got {}",
                self.resolution
            )));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(LabError::Domain(format!(
                "theta grid bounds [{}, {}] are not strictly increasing",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }

    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.resolution - 1) as f64
    }

    /// The k-th grid point, computed as `lower + k (upper - lower) / (n - 1)`
    /// so that grid points with short binary expansions come out exact.
    pub fn value(&self, index: usize) -> f64 {
        if index + 1 == self.resolution {
            return self.upper;
        }
        self.lower + (index as f64) * (self.upper - self.lower) / (self.resolution - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.resolution).map(|k| self.value(k)).collect()
    }

    /// Index of the grid point equal to `theta` within `tol`.
    pub fn index_of(&self, theta: f64, tol: f64) -> Option<usize> {
        let k = ((theta - self.lower) / self.step()).round();
        if k < 0.0 || k >= self.resolution as f64 {
            return None;
        }
        let k = k as usize;
        ((self.value(k) - theta).abs() <= tol).then_some(k)
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lower && theta <= self.upper
    }
}

/// Goal pays θ per step, waypoint pays 1 per step, everything else pays 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    roles: Vec<CellRole>,
    theta_grid: ThetaGrid,
}

impl RewardModel {
    pub fn new(roles: Vec<CellRole>, theta_grid: ThetaGrid) -> Result<Self> {
        theta_grid.check()?;
        Ok(Self { roles, theta_grid })
    }

    pub fn roles(&self) -> &[CellRole] {
        &self.roles
    }

    pub fn theta_grid(&self) -> &ThetaGrid {
        &self.theta_grid
    }

    pub fn with_theta_grid(&self, theta_grid: ThetaGrid) -> Result<Self> {
        Self::new(self.roles.clone(), theta_grid)
    }

    pub fn n_states(&self) -> usize {
        self.roles.len()
    }

    /// sup over the grid and all state-action pairs of |r(s, a; θ)|.
    pub fn r_max(&self) -> f64 {
        self.theta_grid
            .upper
            .abs()
            .max(self.theta_grid.lower.abs())
            .max(1.0)
    }

    /// `r(state, action; θ)`. The reward does not depend on the action.
    pub fn reward_value(&self, state: usize, _action: usize, theta: f64) -> Result<f64> {
        if !self.theta_grid.contains(theta) {
            return Err(LabError::Domain(format!(
                "theta {theta} outside [{}, {}]",
                self.theta_grid.lower, self.theta_grid.upper
            )));
        }
        let role = self.roles.get(state).ok_or_else(|| {
            LabError::Domain(format!("state {state} out of range ({} states)", self.roles.len()))
        })?;
        Ok(Self::role_reward(*role, theta))
    }

    /// Per-state rewards at θ, without the range check.
    pub(crate) fn state_rewards(&self, theta: f64) -> Vec<f64> {
        self.roles.iter().map(|&r| Self::role_reward(r, theta)).collect()
    }

    fn role_reward(role: CellRole, theta: f64) -> f64 {
        match role {
            CellRole::Goal => theta,
            CellRole::Waypoint => 1.0,
            _ => 0.0,
        }
    }
}
