//! Sweep, adversarial and concavity runners behind the command-line tool.

pub mod config;
mod plot;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use crate::bandit::{adversarial_concavity, run_demo, BanditInstance, DemoReport};
use crate::concavity::{
    estimate_concavity, estimate_concavity_table, kinked_two_action_family, quadratic_table,
    ConcavityEstimate,
};
use crate::error::Result;
use crate::grid::{build_gridworld, GridLayout};
use crate::planner::policy_family;
use crate::reward::ThetaGrid;

pub use config::{BiasKind, InferenceMode, ModeName, SweepConfig};
pub use sweep::{compute_sweep, run_sweep, SweepOutput, SweepRow, SweepSummary, CSV_HEADER};

/// Runs the bandit demo and writes `adversarial.csv` and `adversarial.txt`.
pub fn run_adversarial(
    instance: &BanditInstance,
    epsilon: f64,
    out_dir: &Path,
) -> Result<(DemoReport, Vec<PathBuf>)> {
    let report = run_demo(instance, epsilon)?;
    fs::create_dir_all(out_dir)?;
    let csv = out_dir.join("adversarial.csv");
    fs::write(&csv, format!("{}\n{}\n", DemoReport::CSV_HEADER, report.csv_row()))?;
    let txt = out_dir.join("adversarial.txt");
    fs::write(&txt, report.summary())?;
    Ok((report, vec![csv, txt]))
}

/// Families the concavity check can be pointed at.
#[derive(Debug, Clone, PartialEq)]
pub enum ConcavityTarget {
    /// Boltzmann model family of a gridworld (builtin id or layout path).
    Environment(String),
    /// `π(up) ∝ exp(max(θ, 10 − θ))` against an alternative worth 6.
    Kinked,
    /// Log-probabilities quadratic in θ with curvature −2.
    Quadratic,
    /// The demonstrator family of the bandit demo.
    Adversarial,
}

impl ConcavityTarget {
    pub fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "kinked" | "counterexample" => ConcavityTarget::Kinked,
            "quadratic" => ConcavityTarget::Quadratic,
            "adversarial" => ConcavityTarget::Adversarial,
            _ => ConcavityTarget::Environment(s.to_string()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ConcavityTarget::Environment(e) => Path::new(e)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| e.clone()),
            ConcavityTarget::Kinked => "kinked".into(),
            ConcavityTarget::Quadratic => "quadratic".into(),
            ConcavityTarget::Adversarial => "adversarial".into(),
        }
    }

    pub fn estimate(&self) -> Result<ConcavityEstimate> {
        match self {
            ConcavityTarget::Environment(id) => {
                let layout = GridLayout::resolve(id)?;
                let (mdp, reward) = build_gridworld(&layout)?;
                estimate_concavity(&policy_family(&mdp, &reward)?)
            }
            ConcavityTarget::Kinked => estimate_concavity(&kinked_two_action_family(101)?),
            ConcavityTarget::Quadratic => {
                estimate_concavity_table(&quadratic_table(ThetaGrid::new(-2.0, 2.0, 41)?, 2.0, 3)?)
            }
            ConcavityTarget::Adversarial => {
                let instance = BanditInstance {
                    theta_grid: ThetaGrid::new(0.0005, 0.9995, 100)?,
                    ..BanditInstance::default()
                };
                adversarial_concavity(&instance)
            }
        }
    }
}

/// Text report: `ĉ`, up to ten witnesses and a PASS/FAIL line.
pub fn concavity_report(target: &ConcavityTarget, estimate: &ConcavityEstimate) -> String {
    let mut out = format!("target: {}\nc_hat: {}\n", target.label(), estimate.c_hat);
    out.push_str(&format!("witnesses ({} total):\n", estimate.witnesses.len()));
    for w in estimate.witnesses.iter().take(10) {
        out.push_str(&format!(
            "  state={} action={} theta_index={} curvature={}\n",
            w.state, w.action, w.theta_index, w.curvature
        ));
    }
    let verdict = if estimate.holds() { "PASS" } else { "FAIL" };
    out.push_str(&format!("strong log-concavity: {verdict}\n"));
    out
}

pub fn run_concavity(target: &ConcavityTarget, out_dir: &Path) -> Result<(ConcavityEstimate, PathBuf)> {
    let estimate = target.estimate()?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("concavity_{}.txt", target.label()));
    fs::write(&path, concavity_report(target, &estimate))?;
    Ok((estimate, path))
}
