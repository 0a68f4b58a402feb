//! Independent recomputations of the planner, occupancy and likelihood.

mod common;

use common::{finite_horizon_q, monte_carlo_occupancy, total_variation};
use ndarray::Array1;

use rewardlab::bias::{apply_bias, BiasSpec};
use rewardlab::divergence::{kl_discrete, weighted_divergence};
use rewardlab::grid::{build_gridworld, GridLayout};
use rewardlab::inference::{expected_nll, sample_dataset, sample_from_occupancy};
use rewardlab::planner::{
    boltzmann_policy, occupancy, policy_family, soft_value_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use rewardlab::TabularMdp;

fn env(id: &str) -> (TabularMdp, rewardlab::reward::RewardModel) {
    build_gridworld(&GridLayout::builtin(id).unwrap()).unwrap()
}

#[test]
fn soft_values_match_long_finite_horizon() {
    for id in ["A", "B", "C"] {
        let (mdp, reward) = env(id);
        for theta in [1.0, 3.0, 4.0] {
            let rewards: Vec<f64> = (0..mdp.n_states())
                .map(|s| reward.reward_value(s, 0, theta).unwrap())
                .collect();
            let oracle = finite_horizon_q(&mdp, &rewards, 2000);
            let soft = soft_value_iteration(&mdp, &reward, theta, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let mut gap = 0.0_f64;
            for s in 0..mdp.n_states() {
                for a in 0..mdp.n_actions() {
                    gap = gap.max((soft.q[[s, a]] - oracle[s][a]).abs());
                }
            }
            assert!(gap < 1e-6, "env {id}, θ={theta}: sup gap {gap}");
        }
    }
}

#[test]
fn occupancy_matches_monte_carlo() {
    for (k, id) in ["A", "B", "C"].into_iter().enumerate() {
        let (mdp, reward) = env(id);
        let soft = soft_value_iteration(&mdp, &reward, 3.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let policy = boltzmann_policy(&soft).unwrap();
        let exact = occupancy(&mdp, &policy).unwrap();
        let mc = monte_carlo_occupancy(&mdp, &policy, 100_000, 17 + k as u64);
        let tv = total_variation(&exact.w, &mc);
        assert!(tv < 0.02, "env {id}: TV {tv}");
    }
}

#[test]
fn sampled_nll_and_state_frequencies_match_expectations() {
    let (mdp, reward) = env("A");
    let layout = GridLayout::builtin("A").unwrap();
    let biased = apply_bias(&mdp, &layout, &BiasSpec::TransitionSlip { believed_slip: 0.1 }).unwrap();
    let pi_tilde = policy_family(&mdp, &reward).unwrap();
    let pi_star = policy_family(&biased, &reward).unwrap();
    let i_star = 42;
    let w_star = occupancy(&biased, &pi_star.policy(i_star)).unwrap();

    let data = sample_from_occupancy(&w_star, &pi_star, i_star, 100_000, 5).unwrap();
    let mut freq = Array1::<f64>::zeros(mdp.n_states());
    for &(s, _) in &data {
        freq[s] += 1.0 / data.len() as f64;
    }
    assert!(total_variation(&freq, &w_star.w) < 0.02);

    for theta_index in [0, 21, 42, 63] {
        let expected = expected_nll(&pi_tilde, &pi_star, &w_star, i_star, theta_index).unwrap();
        let sampled: f64 = data
            .iter()
            .map(|&(s, a)| -pi_tilde.row(theta_index, s)[a].ln())
            .sum::<f64>()
            / data.len() as f64;
        assert!((expected - sampled).abs() < 0.01, "θ index {theta_index}: {expected} vs {sampled}");
    }
}

#[test]
fn sample_dataset_uses_the_demonstrator_occupancy() {
    let (mdp, reward) = env("B");
    let pi = policy_family(&mdp, &reward).unwrap();
    let a = sample_dataset(&mdp, &pi, 42, 1000, 9).unwrap();
    let w = occupancy(&mdp, &pi.policy(42)).unwrap();
    let b = sample_from_occupancy(&w, &pi, 42, 1000, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn weighted_divergence_matches_brute_force_on_env_a() {
    let (mdp, reward) = env("A");
    let layout = GridLayout::builtin("A").unwrap();
    let biased = apply_bias(&mdp, &layout, &BiasSpec::Myopia { believed_gamma: 0.8 }).unwrap();
    let pi_tilde = policy_family(&mdp, &reward).unwrap();
    let pi_star = policy_family(&biased, &reward).unwrap();
    let w = occupancy(&biased, &pi_star.policy(42)).unwrap();
    let mut brute = 0.0;
    for s in 0..mdp.n_states() {
        let mut kl = 0.0;
        for a in 0..mdp.n_actions() {
            let (p, q) = (pi_star.row(42, s)[a], pi_tilde.row(42, s)[a]);
            if p > 0.0 {
                kl += p * (p / q).ln();
            }
        }
        brute += w.w[s] * kl;
        approx::assert_abs_diff_eq!(
            kl,
            kl_discrete(pi_star.row(42, s), pi_tilde.row(42, s)).unwrap(),
            epsilon = 1e-12
        );
    }
    let d = weighted_divergence(&pi_star, &pi_tilde, &w, 42).unwrap().d_weighted;
    approx::assert_relative_eq!(d, brute, max_relative = 1e-12);
    assert!(d > 0.0);
}
