use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;

use rewardlab::bias::{apply_bias, transition_gap, BiasSpec};
use rewardlab::divergence::kl_discrete;
use rewardlab::grid::{build_gridworld, build_gridworld_with_grid, GridLayout};
use rewardlab::inference::{expected_loss_curve, mle_infer};
use rewardlab::planner::{
    balance_residual, boltzmann_policy, occupancy, policy_family, soft_bellman_update,
    soft_value_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use rewardlab::reward::{CellRole, RewardModel, ThetaGrid};
use rewardlab::TabularMdp;

fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| normalize(&v))
}

/// Random dense MDP with `ns` states and `na` actions.
fn random_mdp(ns: usize, na: usize) -> impl Strategy<Value = TabularMdp> {
    (
        prop::collection::vec(distribution(ns), ns * na),
        distribution(ns),
        0.5f64..0.99,
    )
        .prop_map(move |(rows, init, gamma)| {
            let mut t = Array3::zeros((ns, na, ns));
            for (k, row) in rows.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    t[[k / na, k % na, j]] = *p;
                }
            }
            TabularMdp::new(t, gamma, Array1::from(init), vec![false; ns]).unwrap()
        })
}

fn roles(ns: usize) -> impl Strategy<Value = Vec<CellRole>> {
    prop::collection::vec(
        prop::sample::select(vec![CellRole::Empty, CellRole::Goal, CellRole::Waypoint, CellRole::Lava]),
        ns,
    )
}

fn theta_grid() -> ThetaGrid {
    ThetaGrid::new(1.0, 4.0, 64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn soft_bellman_is_a_gamma_contraction(
        mdp in random_mdp(5, 3),
        rewards in prop::collection::vec(-2.0f64..4.0, 5),
        q1 in prop::collection::vec(-50.0f64..50.0, 15),
        q2 in prop::collection::vec(-50.0f64..50.0, 15),
    ) {
        let q1 = Array2::from_shape_vec((5, 3), q1).unwrap();
        let q2 = Array2::from_shape_vec((5, 3), q2).unwrap();
        let before = (&q1 - &q2).mapv(f64::abs).fold(0.0, |m: f64, &x| m.max(x));
        let t1 = soft_bellman_update(&mdp, &rewards, &q1);
        let t2 = soft_bellman_update(&mdp, &rewards, &q2);
        let after = (&t1 - &t2).mapv(f64::abs).fold(0.0, |m: f64, &x| m.max(x));
        prop_assert!(after <= mdp.gamma() * before + 1e-9);
    }

    #[test]
    fn boltzmann_rows_and_occupancy_balance(
        mdp in random_mdp(6, 3),
        roles in roles(6),
        theta in 1.0f64..4.0,
    ) {
        let reward = RewardModel::new(roles, theta_grid()).unwrap();
        let soft = soft_value_iteration(&mdp, &reward, theta, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let policy = boltzmann_policy(&soft).unwrap();
        for row in policy.probs().rows() {
            prop_assert!(row.iter().all(|&p| p > 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let w = occupancy(&mdp, &policy).unwrap();
        prop_assert!(w.w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.w.sum() - 1.0).abs() < 1e-10);
        prop_assert!(balance_residual(&mdp, &policy, &w.w) < 1e-10);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_on_equality(p in distribution(4), q in distribution(4)) {
        let p = Array1::from(p);
        let q = Array1::from(q);
        let kl = kl_discrete(p.view(), q.view()).unwrap();
        prop_assert!(kl >= 0.0);
        prop_assert_eq!(kl_discrete(p.view(), p.view()).unwrap(), 0.0);
        let l1: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        // Pinsker keeps KL away from zero whenever the distributions differ.
        prop_assert!(kl >= 0.5 * l1 * l1 - 1e-12);
    }

    #[test]
    fn transition_gap_is_a_metric(
        a in random_mdp(4, 2),
        b in random_mdp(4, 2),
        c in random_mdp(4, 2),
    ) {
        let ab = transition_gap(&a, &b).unwrap();
        prop_assert_eq!(ab, transition_gap(&b, &a).unwrap());
        prop_assert_eq!(transition_gap(&a, &a).unwrap(), 0.0);
        prop_assert!(ab > 0.0);
        let ac = transition_gap(&a, &c).unwrap();
        let cb = transition_gap(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn relabeling_states_permutes_values(
        mdp in random_mdp(4, 2),
        roles in roles(4),
        perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
        theta in 1.0f64..4.0,
    ) {
        // State s of the original is state perm[s] of the copy.
        let mut t = Array3::zeros((4, 2, 4));
        let mut init = Array1::zeros(4);
        let mut new_roles = vec![CellRole::Empty; 4];
        for s in 0..4 {
            init[perm[s]] = mdp.initial_dist()[s];
            new_roles[perm[s]] = roles[s];
            for a in 0..2 {
                for s2 in 0..4 {
                    t[[perm[s], a, perm[s2]]] = mdp.transition()[[s, a, s2]];
                }
            }
        }
        let copy = TabularMdp::new(t, mdp.gamma(), init, vec![false; 4]).unwrap();
        let r1 = RewardModel::new(roles, theta_grid()).unwrap();
        let r2 = RewardModel::new(new_roles, theta_grid()).unwrap();
        let v1 = soft_value_iteration(&mdp, &r1, theta, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let v2 = soft_value_iteration(&copy, &r2, theta, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let p1 = boltzmann_policy(&v1).unwrap();
        let p2 = boltzmann_policy(&v2).unwrap();
        let w1 = occupancy(&mdp, &p1).unwrap();
        let w2 = occupancy(&copy, &p2).unwrap();
        for s in 0..4 {
            prop_assert!((v1.v[s] - v2.v[perm[s]]).abs() < 1e-6);
            prop_assert!((w1.w[s] - w2.w[perm[s]]).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn start_value_is_nondecreasing_in_theta(slip in 0.0f64..0.6, env in 0usize..3) {
        let layout = GridLayout::builtin(["A", "B", "C"][env]).unwrap().with_slip(slip).unwrap();
        let (mdp, reward) = build_gridworld(&layout).unwrap();
        let start = layout.find(CellRole::Start).unwrap();
        let mut last = f64::NEG_INFINITY;
        for theta in [1.0, 1.5, 2.0, 3.0, 4.0] {
            let v = soft_value_iteration(&mdp, &reward, theta, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().v[start];
            prop_assert!(v >= last - 1e-9);
            last = v;
        }
    }

    #[test]
    fn slip_gap_is_twice_the_probability_difference(p1 in 0.0f64..0.9, p2 in 0.0f64..0.9) {
        let layout = GridLayout::builtin("A").unwrap();
        let (a, _) = build_gridworld(&layout.with_slip(p1).unwrap()).unwrap();
        let (b, _) = build_gridworld(&layout.with_slip(p2).unwrap()).unwrap();
        prop_assert!((transition_gap(&a, &b).unwrap() - 2.0 * (p1 - p2).abs()).abs() < 1e-12);
    }

    #[test]
    fn unbiased_demonstrator_is_recovered_and_minimizes_loss(k in 0usize..16, env in 0usize..3) {
        let grid = ThetaGrid::new(1.0, 4.0, 16).unwrap();
        let layout = GridLayout::builtin(["A", "B", "C"][env]).unwrap();
        let (mdp, reward) = build_gridworld_with_grid(&layout, grid).unwrap();
        let same = apply_bias(&mdp, &layout, &BiasSpec::None).unwrap();
        let pi = policy_family(&same, &reward).unwrap();
        let w = occupancy(&same, &pi.policy(k)).unwrap();
        let curve = expected_loss_curve(&pi, &pi, &w, k).unwrap();
        // Gibbs: cross-entropy is smallest against the generating θ.
        prop_assert!(curve.iter().all(|&l| l >= curve[k] - 1e-12));
        let result = mle_infer(&curve, &grid, grid.value(k)).unwrap();
        prop_assert_eq!(result.theta_hat_index, k);
        prop_assert_eq!(result.sq_error, 0.0);
    }
}
