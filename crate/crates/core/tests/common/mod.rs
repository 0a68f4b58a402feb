//! Oracles shared by the integration tests.

use ndarray::Array1;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewardlab::planner::Policy;
use rewardlab::TabularMdp;

/// `Q_{k+1} = r + γ P logsumexp(Q_k)` from `Q_0 = 0`, written with plain loops.
pub fn finite_horizon_q(mdp: &TabularMdp, rewards: &[f64], horizon: usize) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![vec![0.0; na]; ns];
    for _ in 0..horizon {
        let v: Vec<f64> = q
            .iter()
            .map(|row| {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
            })
            .collect();
        q = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let ev: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                        rewards[s] + mdp.gamma() * ev
                    })
                    .collect()
            })
            .collect();
    }
    q
}

/// Rollouts stopped at a geometric time `T` with `P(T = t) = (1 − γ) γ^t`.
pub fn monte_carlo_occupancy(mdp: &TabularMdp, policy: &Policy, n: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = WeightedIndex::new(mdp.initial_dist().iter().copied()).unwrap();
    let acts: Vec<_> = (0..mdp.n_states())
        .map(|s| WeightedIndex::new(policy.probs().row(s).iter().copied()).unwrap())
        .collect();
    let mut next = Vec::new();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            next.push(WeightedIndex::new(mdp.row(s, a).iter().copied()).unwrap());
        }
    }
    let mut counts = Array1::<f64>::zeros(mdp.n_states());
    for _ in 0..n {
        let mut s = start.sample(&mut rng);
        while rng.random::<f64>() < mdp.gamma() {
            let a = acts[s].sample(&mut rng);
            s = next[s * mdp.n_actions() + a].sample(&mut rng);
        }
        counts[s] += 1.0;
    }
    counts / n as f64
}

pub fn total_variation(p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
