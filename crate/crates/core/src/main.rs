use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rewardlab::bandit::BanditInstance;
use rewardlab::experiment::sweep::dump_model_values;
use rewardlab::experiment::{
    run_adversarial, run_concavity, run_sweep, BiasKind, ConcavityTarget, InferenceMode, ModeName,
    SweepConfig,
};
use rewardlab::grid::{build_gridworld, GridLayout};
use rewardlab::LabError;

#[derive(Parser)]
#[command(name = "rewardlab", version, about = "Reward inference under misspecified demonstrator models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a demonstrator bias and write divergences, errors and bounds.
    Sweep {
        /// JSON sweep config. Without it, --env and --bias pick a default sweep.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "A")]
        env: String,
        #[arg(long, value_enum, default_value = "transition")]
        bias: BiasKind,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
        #[arg(long, value_enum)]
        mode: Option<ModeName>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the model's soft value tables.
        #[arg(long)]
        dump_values: bool,
    },
    /// Continuous-bandit instability demo.
    Adversarial {
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e9)]
        boost: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Grid estimate of the strong log-concavity constant.
    Concavity {
        /// A, B, C, a layout path, `kinked`, `quadratic` or `adversarial`.
        #[arg(long, default_value = "kinked")]
        target: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a sweep config and the MDP it describes.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Builtin id or layout path.
        #[arg(long)]
        layout: Option<String>,
    },
}

fn exit_code(err: &LabError) -> ExitCode {
    if err.is_config_error() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, LabError> {
    match command {
        Command::Sweep {
            config,
            env,
            bias,
            out,
            svg,
            mode,
            seed,
            dump_values,
        } => {
            let mut cfg = match config {
                Some(path) => SweepConfig::from_json_file(&path)?,
                None => SweepConfig::new(&env, bias),
            };
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            cfg.svg |= svg;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            match mode {
                Some(ModeName::Exact) => cfg.inference = InferenceMode::Exact,
                Some(ModeName::Sampled) if matches!(cfg.inference, InferenceMode::Exact) => {
                    cfg.inference = InferenceMode::sampled_default()
                }
                _ => {}
            }
            let output = run_sweep(&cfg)?;
            if dump_values {
                let path = dump_model_values(&cfg)?;
                println!("wrote {}", path.display());
            }
            for file in &output.files {
                println!("wrote {}", file.display());
            }
            let summary = &output.summary;
            println!(
                "env {} / {}: {} points, d_weighted monotone: {}, spearman(d_w, sq_error): {}",
                summary.environment,
                summary.bias.name(),
                summary.rows.len(),
                summary.monotone_d_weighted,
                summary
                    .spearman_dw_sq_error
                    .map_or("NA".to_string(), |r| format!("{r:.4}"))
            );
            for row in summary.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "point {} failed: {}",
                    row.bias_value,
                    row.error.as_deref().unwrap_or_default()
                );
            }
            Ok(if summary.failed_points > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Adversarial { epsilon, boost, out } => {
            let instance = BanditInstance {
                boost,
                ..BanditInstance::default()
            };
            instance.check()?;
            let (report, files) = run_adversarial(&instance, epsilon, &out)?;
            print!("{}", report.summary());
            for file in files {
                println!("wrote {}", file.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Concavity { target, out } => {
            let target = ConcavityTarget::parse(&target);
            let (estimate, path) = run_concavity(&target, &out)?;
            println!(
                "{}: c_hat = {} ({})",
                target.label(),
                estimate.c_hat,
                if estimate.holds() { "PASS" } else { "FAIL" }
            );
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config, layout } => {
            if config.is_none() && layout.is_none() {
                return Err(LabError::Config("pass --config or --layout".into()));
            }
            if let Some(path) = config {
                let cfg = SweepConfig::from_json_file(&path)?;
                cfg.validate()?;
                println!("config {}: ok", path.display());
                let layout = GridLayout::resolve(&cfg.environment)?;
                report_layout(&cfg.environment, &layout)?;
            }
            if let Some(id) = layout {
                let layout = GridLayout::resolve(&id)?;
                report_layout(&id, &layout)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn report_layout(name: &str, layout: &GridLayout) -> Result<(), LabError> {
    let (mdp, _) = build_gridworld(layout)?;
    let report = mdp.validate();
    if report.is_valid() {
        println!(
            "layout {name}: {} states, {} actions, gamma {}: valid",
            mdp.n_states(),
            mdp.n_actions(),
            mdp.gamma()
        );
        Ok(())
    } else {
        Err(LabError::Numeric(format!("layout {name} produced an invalid MDP:\n{report}")))
    }
}
