use std::fs;
use std::path::PathBuf;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::bias::{apply_bias, transition_gap};
use crate::bounds::{cor1_bound, cor2_bound, theorem2_bound};
use crate::concavity::{estimate_concavity, ConcavityEstimate};
use crate::divergence::{weighted_divergence, worstcase_divergence};
use crate::error::{LabError, Result};
use crate::grid::{build_gridworld_with_grid, GridLayout};
use crate::inference::{expected_loss_curve, mle_infer, sample_from_occupancy};
use crate::mdp::TabularMdp;
use crate::planner::{occupancy, policy_family, solve_family, write_value_csv, PolicyFamily};
use crate::reward::RewardModel;
use crate::stats::{mean_and_stderr, spearman};

use super::config::{BiasKind, InferenceMode, SweepConfig};
use super::plot;

pub const CSV_HEADER: [&str; 8] = [
    "bias_value",
    "delta_p",
    "d_weighted",
    "d_worstcase",
    "sq_error",
    "cor_bound",
    "c_hat",
    "thm2_bound",
];

/// Relative slack for comparisons between quantities computed along
/// different summation orders.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub bias_value: f64,
    pub bias_magnitude: f64,
    pub delta_p: Option<f64>,
    pub d_weighted: f64,
    pub d_worstcase: f64,
    /// Exact mode: `(θ̂ − θ*)²`. Sampled mode: mean over replicates.
    pub sq_error: f64,
    /// Standard error of `sq_error` across replicates (sampled mode only).
    pub sq_error_stderr: Option<f64>,
    pub theta_hat: Option<f64>,
    pub cor_bound: f64,
    /// `min(ĉ*, ĉ̃)`: both families must be log-concave for the stability bound.
    pub c_hat: f64,
    pub c_hat_demonstrator: f64,
    pub c_hat_model: f64,
    pub thm2_bound: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(bias_value: f64, bias_magnitude: f64, error: &LabError) -> Self {
        Self {
            bias_value,
            bias_magnitude,
            delta_p: None,
            d_weighted: f64::NAN,
            d_worstcase: f64::NAN,
            sq_error: f64::NAN,
            sq_error_stderr: None,
            theta_hat: None,
            cor_bound: f64::NAN,
            c_hat: f64::NAN,
            c_hat_demonstrator: f64::NAN,
            c_hat_model: f64::NAN,
            thm2_bound: None,
            error: Some(error.to_string()),
        }
    }

    /// Nonnegative divergences, `d_w ≤ d_wc` and `d_w ≤` the corollary bound.
    pub fn check_invariants(&self) -> Result<()> {
        let slack = |x: f64| ROUNDING_SLACK * x.abs().max(1.0);
        if !(self.d_weighted >= 0.0 && self.d_worstcase >= 0.0) {
            return Err(LabError::Numeric(format!(
                "negative divergence at bias {}: d_w={}, d_wc={}",
                self.bias_value, self.d_weighted, self.d_worstcase
            )));
        }
        if self.d_weighted > self.d_worstcase + slack(self.d_worstcase) {
            return Err(LabError::Numeric(format!(
                "weighted divergence {} exceeds worst case {} at bias {}",
                self.d_weighted, self.d_worstcase, self.bias_value
            )));
        }
        if self.d_weighted > self.cor_bound + slack(self.cor_bound) {
            return Err(LabError::Numeric(format!(
                "weighted divergence {} exceeds the corollary bound {} at bias {}",
                self.d_weighted, self.cor_bound, self.bias_value
            )));
        }
        Ok(())
    }

    pub fn csv_record(&self) -> [String; 8] {
        let num = |x: f64| if x.is_nan() { "NA".to_string() } else { x.to_string() };
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), num);
        [
            num(self.bias_value),
            opt(self.delta_p),
            num(self.d_weighted),
            num(self.d_worstcase),
            num(self.sq_error),
            num(self.cor_bound),
            num(self.c_hat),
            opt(self.thm2_bound),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub environment: String,
    pub bias: BiasKind,
    pub theta_star: f64,
    pub rows: Vec<SweepRow>,
    /// `d_weighted` never decreases as the bias magnitude grows.
    pub monotone_d_weighted: bool,
    /// Spearman correlation of `d_weighted` and `sq_error` over the sweep.
    pub spearman_dw_sq_error: Option<f64>,
    pub failed_points: usize,
}

impl SweepSummary {
    fn from_rows(config: &SweepConfig, rows: Vec<SweepRow>) -> Self {
        let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none()).collect();
        let mut by_magnitude = ok.clone();
        by_magnitude.sort_by(|a, b| a.bias_magnitude.total_cmp(&b.bias_magnitude));
        let monotone_d_weighted = by_magnitude
            .windows(2)
            .all(|w| w[1].d_weighted >= w[0].d_weighted - ROUNDING_SLACK);
        let dw: Vec<f64> = ok.iter().map(|r| r.d_weighted).collect();
        let sq: Vec<f64> = ok.iter().map(|r| r.sq_error).collect();
        Self {
            environment: config.environment_label(),
            bias: config.bias,
            theta_star: config.theta_star,
            failed_points: rows.len() - ok.len(),
            rows,
            monotone_d_weighted,
            spearman_dw_sq_error: spearman(&dw, &sq),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let to_io = |e: csv::Error| LabError::Io(e.into());
        writer.write_record(CSV_HEADER).map_err(to_io)?;
        for row in &self.rows {
            writer.write_record(row.csv_record()).map_err(to_io)?;
        }
        writer
            .into_inner()
            .map_err(|e| LabError::Io(std::io::Error::other(e.to_string())))
    }
}

/// Everything shared by the points of one sweep.
struct SweepContext {
    layout: GridLayout,
    mdp: TabularMdp,
    reward: RewardModel,
    pi_tilde: PolicyFamily,
    c_hat_model: f64,
    theta_star_index: usize,
}

impl SweepContext {
    fn new(config: &SweepConfig) -> Result<Self> {
        let layout = config.validate()?;
        let (mdp, reward) = build_gridworld_with_grid(&layout, config.theta_grid)?;
        let pi_tilde = policy_family(&mdp, &reward)?;
        let c_hat_model = estimate_concavity(&pi_tilde)?.c_hat;
        let theta_star_index = config
            .theta_grid
            .index_of(config.theta_star, 1e-9)
            .ok_or_else(|| LabError::Config("theta_star is not on the grid".into()))?;
        Ok(Self {
            layout,
            mdp,
            reward,
            pi_tilde,
            c_hat_model,
            theta_star_index,
        })
    }
}

fn evaluate_point(
    config: &SweepConfig,
    ctx: &SweepContext,
    point: usize,
    value: f64,
) -> Result<SweepRow> {
    let spec = config.bias.spec(value);
    let biased = apply_bias(&ctx.mdp, &ctx.layout, &spec)?;
    let pi_star = policy_family(&biased, &ctx.reward)?;
    let i_star = ctx.theta_star_index;
    // The demonstrator's occupancy comes from the MDP it plans in.
    let w_star = occupancy(&biased, &pi_star.policy(i_star))?;

    let weighted = weighted_divergence(&pi_star, &ctx.pi_tilde, &w_star, i_star)?;
    let d_worstcase = worstcase_divergence(&pi_star, &ctx.pi_tilde)?;

    let grid = config.theta_grid;
    let (sq_error, sq_error_stderr, theta_hat) = match &config.inference {
        InferenceMode::Exact => {
            let curve = expected_loss_curve(&ctx.pi_tilde, &pi_star, &w_star, i_star)?;
            let result = mle_infer(&curve, &grid, config.theta_star)?;
            (result.sq_error, None, Some(result.theta_hat))
        }
        InferenceMode::Sampled { n, .. } => {
            let errors = config
                .replicate_seeds(point)
                .into_iter()
                .map(|seed| {
                    let data = sample_from_occupancy(&w_star, &pi_star, i_star, *n, seed)?;
                    let curve = count_loss_curve(&ctx.pi_tilde, &data)?;
                    Ok(mle_infer(&curve, &grid, config.theta_star)?.sq_error)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, se) = mean_and_stderr(&errors);
            (mean, Some(se), None)
        }
    };

    let n_actions = ctx.mdp.n_actions();
    let r_max = ctx.reward.r_max();
    let (delta_p, cor_bound) = match config.bias {
        BiasKind::Transition | BiasKind::Power => {
            let gap = transition_gap(&ctx.mdp, &biased)?;
            (Some(gap), cor1_bound(gap, n_actions, r_max, ctx.mdp.gamma())?)
        }
        BiasKind::Myopia => (
            None,
            cor2_bound(n_actions, r_max, ctx.mdp.gamma(), biased.gamma())?,
        ),
    };

    let c_hat_demonstrator = estimate_concavity(&pi_star)?.c_hat;
    let c_hat = c_hat_demonstrator.min(ctx.c_hat_model);
    let row = SweepRow {
        bias_value: value,
        bias_magnitude: config.bias.magnitude(value, &ctx.layout),
        delta_p,
        d_weighted: weighted.d_weighted,
        d_worstcase,
        sq_error,
        sq_error_stderr,
        theta_hat,
        cor_bound,
        c_hat,
        c_hat_demonstrator,
        c_hat_model: ctx.c_hat_model,
        thm2_bound: theorem2_bound(c_hat, weighted.d_weighted),
        error: None,
    };
    row.check_invariants()?;
    Ok(row)
}

/// Mean NLL per θ, computed from `(s, a)` counts.
fn count_loss_curve(pi_tilde: &PolicyFamily, data: &[(usize, usize)]) -> Result<Vec<f64>> {
    let mut counts = Array2::<f64>::zeros((pi_tilde.n_states(), pi_tilde.n_actions()));
    for &(s, a) in data {
        counts[[s, a]] += 1.0;
    }
    let n = data.len() as f64;
    Ok((0..pi_tilde.n_thetas())
        .map(|i| {
            let slice = pi_tilde.slice(i);
            counts
                .indexed_iter()
                .filter(|(_, &c)| c > 0.0)
                .map(|((s, a), &c)| -c * slice[[s, a]].ln())
                .sum::<f64>()
                / n
        })
        .collect())
}

/// Runs every sweep point. Invalid configs fail before any work; a failing
/// point is recorded in its row and the sweep continues.
pub fn compute_sweep(config: &SweepConfig) -> Result<SweepSummary> {
    let ctx = SweepContext::new(config)?;
    let values = config.values();
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(point, &value)| {
            evaluate_point(config, &ctx, point, value).unwrap_or_else(|e| {
                SweepRow::failed(value, config.bias.magnitude(value, &ctx.layout), &e)
            })
        })
        .collect();
    Ok(SweepSummary::from_rows(config, rows))
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub summary: SweepSummary,
    pub files: Vec<PathBuf>,
}

/// [`compute_sweep`] plus CSV, JSON summary and optional SVG charts.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    let summary = compute_sweep(config)?;
    fs::create_dir_all(&config.output_dir)?;
    let stem = format!("sweep_{}_{}", config.environment_label(), config.bias.name());
    let mut files = Vec::new();

    let csv_path = config.output_dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, summary.to_csv()?)?;
    files.push(csv_path);

    let json_path = config.output_dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| LabError::Io(std::io::Error::other(e)))?;
    fs::write(&json_path, json + "\n")?;
    files.push(json_path);

    if config.svg {
        files.extend(plot::write_sweep_charts(&summary, &config.output_dir, &stem)?);
    }
    Ok(SweepOutput { summary, files })
}

/// Writes the model's soft value tables as `state,theta,v` CSV.
pub fn dump_model_values(config: &SweepConfig) -> Result<PathBuf> {
    let layout = config.validate()?;
    let (mdp, reward) = build_gridworld_with_grid(&layout, config.theta_grid)?;
    let values = solve_family(&mdp, &reward)?;
    fs::create_dir_all(&config.output_dir)?;
    let path = config
        .output_dir
        .join(format!("values_{}.csv", config.environment_label()));
    write_value_csv(fs::File::create(&path)?, &values)?;
    Ok(path)
}

/// Curvature of the model family for a gridworld.
pub fn model_concavity(layout: &GridLayout, config: &SweepConfig) -> Result<ConcavityEstimate> {
    let (mdp, reward) = build_gridworld_with_grid(layout, config.theta_grid)?;
    estimate_concavity(&policy_family(&mdp, &reward)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_bias_point_is_exact() {
        let mut config = SweepConfig::new("A", BiasKind::Transition);
        config.sweep_values = Some(vec![0.3]);
        let summary = compute_sweep(&config).unwrap();
        let row = &summary.rows[0];
        assert!(row.error.is_none(), "{:?}", row.error);
        assert_eq!(row.d_weighted, 0.0);
        assert_eq!(row.sq_error, 0.0);
        assert_eq!(row.delta_p, Some(0.0));
    }

    #[test]
    fn csv_header_is_exact() {
        let mut config = SweepConfig::new("A", BiasKind::Myopia);
        config.sweep_values = Some(vec![0.98, 0.9]);
        let csv = String::from_utf8(compute_sweep(&config).unwrap().to_csv().unwrap()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "bias_value,delta_p,d_weighted,d_worstcase,sq_error,cor_bound,c_hat,thm2_bound"
        );
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn count_curve_matches_direct_average() {
        let mut config = SweepConfig::new("A", BiasKind::Transition);
        config.sweep_values = Some(vec![0.3]);
        let ctx = SweepContext::new(&config).unwrap();
        let data = [(0, 1), (0, 1), (1, 3), (8, 4)];
        let counted = count_loss_curve(&ctx.pi_tilde, &data).unwrap();
        let direct = crate::inference::empirical_loss_curve(&ctx.pi_tilde, &data).unwrap();
        for (a, b) in counted.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn failing_invariant_is_reported() {
        let row = SweepRow {
            d_weighted: 2.0,
            d_worstcase: 1.0,
            cor_bound: 10.0,
            ..SweepRow::failed(0.1, 0.2, &LabError::Numeric("x".into()))
        };
        assert!(row.check_invariants().is_err());
    }
}
