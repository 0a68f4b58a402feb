use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::BiasSpec;
use crate::error::{LabError, Result};
use crate::grid::{default_theta_grid, GridLayout};
use crate::reward::ThetaGrid;

/// Which demonstrator bias a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    /// Believed slip probability of the gridworld.
    Transition,
    /// Entrywise power sharpening of the transition rows.
    Power,
    /// Believed discount factor.
    Myopia,
}

impl BiasKind {
    pub fn name(self) -> &'static str {
        match self {
            BiasKind::Transition => "transition",
            BiasKind::Power => "power",
            BiasKind::Myopia => "myopia",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            BiasKind::Transition => vec![0.30, 0.25, 0.20, 0.15, 0.10, 0.05, 0.00],
            BiasKind::Power => vec![1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0],
            BiasKind::Myopia => vec![0.98, 0.9, 0.8, 0.7, 0.6, 0.5],
        }
    }

    pub fn spec(self, value: f64) -> BiasSpec {
        match self {
            BiasKind::Transition => BiasSpec::TransitionSlip { believed_slip: value },
            BiasKind::Power => BiasSpec::PowerSharpen { n: value },
            BiasKind::Myopia => BiasSpec::Myopia { believed_gamma: value },
        }
    }

    /// Distance of a sweep value from the unbiased demonstrator.
    pub fn magnitude(self, value: f64, layout: &GridLayout) -> f64 {
        match self {
            BiasKind::Transition => (layout.slip_prob() - value).abs(),
            BiasKind::Power => value - 1.0,
            BiasKind::Myopia => (layout.gamma() - value).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InferenceMode {
    #[default]
    /// Expected negative log-likelihood under the demonstrator's occupancy.
    Exact,
    /// Finite datasets; one MLE per seed.
    Sampled {
        #[serde(default = "default_sample_size")]
        n: usize,
        /// Replicate seeds. Empty means `replicates` seeds derived from the
        /// config seed.
        #[serde(default)]
        seeds: Vec<u64>,
        #[serde(default = "default_replicates")]
        replicates: usize,
    },
}

impl InferenceMode {
    pub fn sampled_default() -> Self {
        InferenceMode::Sampled {
            n: default_sample_size(),
            seeds: Vec::new(),
            replicates: default_replicates(),
        }
    }
}

fn default_sample_size() -> usize {
    10_000
}

fn default_replicates() -> usize {
    10
}

fn default_theta_star() -> f64 {
    3.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `A`, `B`, `C` or a path to a layout file.
    pub environment: String,
    pub bias: BiasKind,
    /// Defaults to [`BiasKind::default_values`].
    #[serde(default)]
    pub sweep_values: Option<Vec<f64>>,
    #[serde(default = "default_theta_star")]
    pub theta_star: f64,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: ThetaGrid,
    #[serde(default)]
    pub inference: InferenceMode,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub svg: bool,
}

impl SweepConfig {
    pub fn new(environment: &str, bias: BiasKind) -> Self {
        Self {
            environment: environment.to_string(),
            bias,
            sweep_values: None,
            theta_star: default_theta_star(),
            theta_grid: default_theta_grid(),
            inference: InferenceMode::Exact,
            output_dir: default_output_dir(),
            seed: 0,
            svg: false,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    pub fn values(&self) -> Vec<f64> {
        self.sweep_values
            .clone()
            .unwrap_or_else(|| self.bias.default_values())
    }

    /// Short label used in output file names.
    pub fn environment_label(&self) -> String {
        let path = Path::new(&self.environment);
        if path.exists() {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.environment.clone())
        } else {
            self.environment.clone()
        }
    }

    /// Replicate seeds for sweep point `point`.
    pub fn replicate_seeds(&self, point: usize) -> Vec<u64> {
        match &self.inference {
            InferenceMode::Exact => Vec::new(),
            InferenceMode::Sampled { seeds, replicates, .. } => {
                let base: Vec<u64> = if seeds.is_empty() {
                    (0..*replicates as u64).map(|r| derive_seed(self.seed, r)).collect()
                } else {
                    seeds.clone()
                };
                base.into_iter()
                    .map(|s| derive_seed(s, point as u64))
                    .collect()
            }
        }
    }

    /// Resolves the layout and checks every field before any work starts.
    pub fn validate(&self) -> Result<GridLayout> {
        let layout = GridLayout::resolve(&self.environment)
            .map_err(|e| LabError::Config(format!("environment '{}': {e}", self.environment)))?;
        self.theta_grid
            .check()
            .map_err(|e| LabError::Config(e.to_string()))?;
        if self.theta_grid.index_of(self.theta_star, 1e-9).is_none() {
            return Err(LabError::Config(format!(
                "theta_star {} is not a point of the theta grid",
                self.theta_star
            )));
        }
        let values = self.values();
        if values.is_empty() {
            return Err(LabError::Config("sweep has no values".into()));
        }
        for v in values {
            self.bias
                .spec(v)
                .check()
                .map_err(|e| LabError::Config(format!("sweep value {v}: {e}")))?;
        }
        if let InferenceMode::Sampled { n, seeds, replicates } = &self.inference {
            if *n == 0 {
                return Err(LabError::Config("sampled mode needs n >= 1".into()));
            }
            if seeds.is_empty() && *replicates == 0 {
                return Err(LabError::Config("sampled mode needs at least one seed".into()));
            }
        }
        Ok(layout)
    }
}

/// SplitMix64 step over `(base, index)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
