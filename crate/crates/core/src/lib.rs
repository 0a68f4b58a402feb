//! Reward inference under misspecified demonstrator models.
//!
//! The crate builds small tabular MDPs with a one-parameter reward, derives
//! Boltzmann demonstrator policies from soft value iteration, injects
//! structured biases into the demonstrator, and measures how far the
//! maximum-likelihood reward estimate moves as a function of the policy
//! divergence between the demonstrator and the learner's model.
//!
//! Module map:
//!
//! - [`mdp`], [`reward`], [`grid`]: tabular MDPs, the θ-parameterized reward
//!   and the gridworld builder.
//! - [`planner`]: soft value iteration, Boltzmann policy families and exact
//!   discounted occupancy measures.
//! - [`bias`]: transition misbelief, illusion-of-control sharpening, myopia.
//! - [`divergence`], [`inference`], [`concavity`], [`bounds`]: policy
//!   divergences, likelihood-based reward inference, curvature estimates and
//!   the stability bounds.
//! - [`bandit`]: the continuous-action instability construction.
//! - [`experiment`]: sweep runner and report writers used by the CLI.

pub mod bandit;
pub mod bias;
pub mod bounds;
pub mod concavity;
pub mod divergence;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod inference;
pub mod mdp;
pub mod planner;
pub mod reward;
pub mod stats;

pub use error::{LabError, Result};
pub use mdp::TabularMdp;
