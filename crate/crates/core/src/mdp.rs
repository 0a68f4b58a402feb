//! Finite MDPs with dense transition tensors.

use std::fmt;

use ndarray::{Array1, Array3, ArrayView1};

use crate::error::{LabError, Result};

/// Row sums and the initial distribution must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite MDP without reward. Rewards live in [`crate::reward::RewardModel`]
/// so the same dynamics can be paired with every θ on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    /// Indexed `(state, action, next_state)`.
    transition: Array3<f64>,
    gamma: f64,
    initial_dist: Array1<f64>,
    absorbing: Vec<bool>,
}

impl TabularMdp {
    /// Assembles an MDP after checking that all dimensions agree. The
    /// probabilistic invariants are not enforced here; see [`TabularMdp::validate`].
    pub fn new(
        transition: Array3<f64>,
        gamma: f64,
        initial_dist: Array1<f64>,
        absorbing: Vec<bool>,
    ) -> Result<Self> {
        let (n_states, n_actions, n_next) = transition.dim();
        if n_states == 0 || n_actions == 0 {
            return Err(LabError::Domain("MDP needs at least one state and one action".into()));
        }
        if n_next != n_states {
            return Err(LabError::Domain(format!(
                "transition tensor has {n_next} next states but {n_states} states"
            )));
        }
        if initial_dist.len() != n_states || absorbing.len() != n_states {
            return Err(LabError::Domain(format!(
                "initial distribution ({}) and absorbing flags ({}) must have {n_states} entries",
                initial_dist.len(),
                absorbing.len()
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(LabError::Domain(format!("discount {gamma} outside (0, 1)")));
        }
        Ok(Self {
            transition,
            gamma,
            initial_dist,
            absorbing,
        })
    }

    pub fn n_states(&self) -> usize {
        self.transition.dim().0
    }

    pub fn n_actions(&self) -> usize {
        self.transition.dim().1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    /// `P(· | state, action)`.
    pub fn row(&self, state: usize, action: usize) -> ArrayView1<'_, f64> {
        self.transition.slice(ndarray::s![state, action, ..])
    }

    pub fn initial_dist(&self) -> &Array1<f64> {
        &self.initial_dist
    }

    pub fn absorbing(&self) -> &[bool] {
        &self.absorbing
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.absorbing[state]
    }

    /// Same dynamics with a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.transition.clone(),
            gamma,
            self.initial_dist.clone(),
            self.absorbing.clone(),
        )
    }

    /// Same discount and start distribution with replaced dynamics.
    pub fn with_transition(&self, transition: Array3<f64>) -> Result<Self> {
        if transition.dim() != self.transition.dim() {
            return Err(LabError::Domain(format!(
                "replacement transition shape {:?} differs from {:?}",
                transition.dim(),
                self.transition.dim()
            )));
        }
        Self::new(
            transition,
            self.gamma,
            self.initial_dist.clone(),
            self.absorbing.clone(),
        )
    }

    /// Lists every violated invariant. An empty report means the MDP is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (n_states, n_actions, _) = self.transition.dim();
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = self.row(s, a);
                for (next, &p) in row.iter().enumerate() {
                    if p < 0.0 || !p.is_finite() {
                        violations.push(Violation::NegativeEntry {
                            state: s,
                            action: a,
                            next_state: next,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL || !sum.is_finite() {
                    violations.push(Violation::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                if self.absorbing[s] && row[s] != 1.0 {
                    violations.push(Violation::AbsorbingLeak {
                        state: s,
                        action: a,
                        self_prob: row[s],
                    });
                }
            }
        }
        for (s, &p) in self.initial_dist.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                violations.push(Violation::NegativeInitial { state: s, value: p });
            }
        }
        let init_sum = self.initial_dist.sum();
        if (init_sum - 1.0).abs() > STOCHASTIC_TOL || !init_sum.is_finite() {
            violations.push(Violation::InitialSum { sum: init_sum });
        }
        ValidationReport { violations }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { state: usize, action: usize, sum: f64 },
    NegativeEntry { state: usize, action: usize, next_state: usize, value: f64 },
    AbsorbingLeak { state: usize, action: usize, self_prob: f64 },
    InitialSum { sum: f64 },
    NegativeInitial { state: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => {
                write!(f, "row (s={state}, a={action}) sums to {sum}")
            }
            Violation::NegativeEntry { state, action, next_state, value } => write!(
                f,
                "P({next_state} | s={state}, a={action}) = {value} is negative or non-finite"
            ),
            Violation::AbsorbingLeak { state, action, self_prob } => write!(
                f,
                "absorbing state {state} keeps only {self_prob} of its mass under action {action}"
            ),
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::NegativeInitial { state, value } => {
                write!(f, "initial probability of state {state} is {value}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}
