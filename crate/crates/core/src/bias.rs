//! Structured demonstrator biases expressed as a modified MDP.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{build_gridworld, GridLayout};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasSpec {
    None,
    /// The demonstrator believes the gridworld slips with this probability.
    TransitionSlip { believed_slip: f64 },
    /// Illusion of control: each row is raised entrywise to the power `n`
    /// and renormalized.
    PowerSharpen { n: f64 },
    /// The demonstrator plans with a smaller discount.
    Myopia { believed_gamma: f64 },
}

impl BiasSpec {
    pub fn check(&self) -> Result<()> {
        match *self {
            BiasSpec::None => Ok(()),
            BiasSpec::TransitionSlip { believed_slip } if !(0.0..1.0).contains(&believed_slip) => {
                Err(LabError::Domain(format!("believed slip {believed_slip} outside [0, 1)")))
            }
            BiasSpec::PowerSharpen { n } if !(n >= 1.0 && n.is_finite()) => {
                Err(LabError::Domain(format!("sharpening exponent {n} must be >= 1")))
            }
            BiasSpec::Myopia { believed_gamma } if !(believed_gamma > 0.0 && believed_gamma < 1.0) => {
                Err(LabError::Domain(format!("believed discount {believed_gamma} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }
}

/// The MDP the biased demonstrator plans in.
pub fn apply_bias(mdp: &TabularMdp, layout: &GridLayout, spec: &BiasSpec) -> Result<TabularMdp> {
    spec.check()?;
    match *spec {
        BiasSpec::None => Ok(mdp.clone()),
        BiasSpec::TransitionSlip { believed_slip } => {
            let believed = layout.with_slip(believed_slip)?.with_gamma(mdp.gamma())?;
            let (rebuilt, _) = build_gridworld(&believed)?;
            if rebuilt.n_states() != mdp.n_states() || rebuilt.n_actions() != mdp.n_actions() {
                return Err(LabError::Domain(
                    "layout does not match the MDP it is supposed to describe".into(),
                ));
            }
            Ok(rebuilt)
        }
        BiasSpec::PowerSharpen { n } => sharpen(mdp, n),
        BiasSpec::Myopia { believed_gamma } => mdp.with_gamma(believed_gamma),
    }
}

/// `P*(·|s,a) ∝ P(·|s,a)^n`. Ties at the row maximum keep equal mass.
pub fn sharpen(mdp: &TabularMdp, n: f64) -> Result<TabularMdp> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(LabError::Domain(format!("sharpening exponent {n} must be >= 1")));
    }
    let mut transition = mdp.transition().clone();
    let (n_states, n_actions, _) = transition.dim();
    for s in 0..n_states {
        for a in 0..n_actions {
            let mut row = transition.slice_mut(ndarray::s![s, a, ..]);
            // Scale by the row max first so large n cannot underflow the whole row.
            let max = row.iter().copied().fold(0.0, f64::max);
            if !(max > 0.0) {
                return Err(LabError::Numeric(format!("row (s={s}, a={a}) has no mass to sharpen")));
            }
            row.mapv_inplace(|p| (p / max).powf(n));
            let total = row.sum();
            row.mapv_inplace(|p| p / total);
        }
    }
    mdp.with_transition(transition)
}

/// `sup_{s,a} ‖P₁(·|s,a) − P₂(·|s,a)‖₁`.
pub fn transition_gap(p_true: &TabularMdp, p_believed: &TabularMdp) -> Result<f64> {
    if p_true.transition().dim() != p_believed.transition().dim() {
        return Err(LabError::Domain(format!(
            "transition shapes differ: {:?} vs {:?}",
            p_true.transition().dim(),
            p_believed.transition().dim()
        )));
    }
    let mut gap = 0.0_f64;
    for s in 0..p_true.n_states() {
        for a in 0..p_true.n_actions() {
            let l1: f64 = p_true
                .row(s, a)
                .iter()
                .zip(p_believed.row(s, a).iter())
                .map(|(x, y)| (x - y).abs())
                .sum();
            gap = gap.max(l1);
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::STOCHASTIC_TOL;
    use ndarray::{array, Array3};

    fn two_by_two(row: [f64; 2]) -> TabularMdp {
        let mut p = Array3::zeros((2, 1, 2));
        p[[0, 0, 0]] = row[0];
        p[[0, 0, 1]] = row[1];
        p[[1, 0, 1]] = 1.0;
        TabularMdp::new(p, 0.9, array![1.0, 0.0], vec![false, true]).unwrap()
    }

    fn env_a() -> (TabularMdp, GridLayout) {
        let layout = GridLayout::builtin("A").unwrap();
        let (mdp, _) = build_gridworld(&layout).unwrap();
        (mdp, layout)
    }

    #[test]
    fn none_and_unit_power_are_identity() {
        let (mdp, layout) = env_a();
        assert_eq!(apply_bias(&mdp, &layout, &BiasSpec::None).unwrap(), mdp);
        let same = apply_bias(&mdp, &layout, &BiasSpec::PowerSharpen { n: 1.0 }).unwrap();
        for (x, y) in same.transition().iter().zip(mdp.transition().iter()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn squared_row_renormalizes() {
        let sharp = sharpen(&two_by_two([0.7, 0.3]), 2.0).unwrap();
        let row = sharp.row(0, 0);
        // 0.49 / 0.58 and 0.09 / 0.58
        assert!((row[0] - 0.49 / 0.58).abs() < 1e-15);
        assert!((row[1] - 0.09 / 0.58).abs() < 1e-15);
        assert!((row[0] - 0.8448).abs() < 1e-4);
        assert!((row[1] - 0.1552).abs() < 1e-4);
    }

    #[test]
    fn large_power_approaches_one_hot() {
        let sharp = sharpen(&two_by_two([0.7, 0.3]), 64.0).unwrap();
        assert!(sharp.row(0, 0)[0] > 1.0 - 1e-9);
    }

    #[test]
    fn ties_are_kept_proportional() {
        let sharp = sharpen(&two_by_two([0.5, 0.5]), 50.0).unwrap();
        assert_eq!(sharp.row(0, 0)[0], 0.5);
        assert_eq!(sharp.row(0, 0)[1], 0.5);
    }

    #[test]
    fn myopia_replaces_discount_only() {
        let (mdp, layout) = env_a();
        let myopic = apply_bias(&mdp, &layout, &BiasSpec::Myopia { believed_gamma: 0.5 }).unwrap();
        assert_eq!(myopic.gamma(), 0.5);
        assert_eq!(myopic.transition(), mdp.transition());
    }

    #[test]
    fn biased_gridworlds_stay_valid() {
        let (mdp, layout) = env_a();
        for spec in [
            BiasSpec::TransitionSlip { believed_slip: 0.0 },
            BiasSpec::TransitionSlip { believed_slip: 0.15 },
            BiasSpec::PowerSharpen { n: 3.5 },
            BiasSpec::PowerSharpen { n: 200.0 },
            BiasSpec::Myopia { believed_gamma: 0.6 },
        ] {
            let biased = apply_bias(&mdp, &layout, &spec).unwrap();
            let report = biased.validate();
            assert!(report.is_valid(), "{spec:?}: {report}");
            for s in 0..biased.n_states() {
                for a in 0..biased.n_actions() {
                    assert!((biased.row(s, a).sum() - 1.0).abs() <= STOCHASTIC_TOL);
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let (mdp, layout) = env_a();
        for spec in [
            BiasSpec::TransitionSlip { believed_slip: 1.0 },
            BiasSpec::TransitionSlip { believed_slip: -0.1 },
            BiasSpec::PowerSharpen { n: 0.5 },
            BiasSpec::Myopia { believed_gamma: 1.0 },
            BiasSpec::Myopia { believed_gamma: 0.0 },
        ] {
            assert!(apply_bias(&mdp, &layout, &spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn gap_examples() {
        let (mdp, layout) = env_a();
        assert_eq!(transition_gap(&mdp, &mdp).unwrap(), 0.0);
        assert_eq!(
            transition_gap(&two_by_two([1.0, 0.0]), &two_by_two([0.0, 1.0])).unwrap(),
            2.0
        );
        let believed =
            apply_bias(&mdp, &layout, &BiasSpec::TransitionSlip { believed_slip: 0.2 }).unwrap();
        assert!((transition_gap(&mdp, &believed).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn gap_shape_mismatch_is_domain_error() {
        let (mdp, _) = env_a();
        assert!(matches!(
            transition_gap(&mdp, &two_by_two([0.5, 0.5])),
            Err(LabError::Domain(_))
        ));
    }

    #[test]
    fn spec_serializes_with_kind_tag() {
        let json = serde_json::to_string(&BiasSpec::Myopia { believed_gamma: 0.5 }).unwrap();
        assert_eq!(json, r#"{"kind":"myopia","believed_gamma":0.5}"#);
        let back: BiasSpec = serde_json::from_str(r#"{"kind":"power_sharpen","n":4}"#).unwrap();
        assert_eq!(back, BiasSpec::PowerSharpen { n: 4.0 });
    }
}
