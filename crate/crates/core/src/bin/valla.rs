use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use valla::cli::{
    cmd_compare, cmd_evaluate, cmd_fit, cmd_ood, cmd_predict_grid, cmd_train_map, default_config_toml, state_path,
    ExperimentConfig, Method, Split, CHECKPOINT,
};
use valla::{Error, Result};

#[derive(Parser)]
#[command(name = "valla", version, about = "Linearized Laplace uncertainty for pre-trained MLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the MAP network and write its checkpoint.
    TrainMap {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a posterior on top of a checkpoint.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to <output_dir>/map.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides the config's method.
        #[arg(long)]
        method: Option<String>,
    },
    /// Metrics of a fitted state on one split.
    Evaluate {
        #[arg(long, required_unless_present = "ood")]
        config: Option<PathBuf>,
        /// Defaults to <output_dir>/<method>.state.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// OOD mode: in- and out-of-distribution entropy dumps; prints the AUC.
        #[arg(long, num_args = 2, value_names = ["IN_CSV", "OUT_CSV"], conflicts_with_all = ["config", "state"])]
        ood: Option<Vec<PathBuf>>,
    },
    /// Predictive on a uniform grid of a 1-D regression state.
    PredictGrid {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit and evaluate several methods on a shared checkpoint.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated method names.
        #[arg(long, default_value = "lla_exact,valla,ella,lla_diag,lla_last_layer")]
        methods: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Print the default configuration.
    ShowDefaults,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainMap { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let path = cmd_train_map(&cfg)?;
            println!("{}", path.display());
        }
        Command::Fit {
            config,
            checkpoint,
            method,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(m) = method {
                cfg.method = Method::parse(&m)?;
            }
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT));
            let out = cmd_fit(&cfg, &checkpoint)?;
            println!("{}", out.state_path.display());
        }
        Command::Evaluate {
            config,
            state,
            split,
            ood,
        } => {
            if let Some(files) = ood {
                println!("{}", cmd_ood(&files[0], &files[1])?);
                return Ok(());
            }
            let split = Split::parse(&split)?;
            let cfg = ExperimentConfig::load(&config.expect("required by clap"))?;
            let state = state.unwrap_or_else(|| state_path(&cfg, cfg.method));
            let report = cmd_evaluate(&cfg, &state, split)?;
            println!("{}", report.to_json());
        }
        Command::PredictGrid {
            state,
            lo,
            hi,
            resolution,
            out,
        } => {
            cmd_predict_grid(&state, (lo, hi), resolution, &out)?;
            println!("{}", out.display());
        }
        Command::Compare {
            config,
            methods,
            checkpoint,
            split,
        } => {
            let split = Split::parse(&split)?;
            let methods = methods.split(',').map(Method::parse).collect::<Result<Vec<_>>>()?;
            let cfg = ExperimentConfig::load(&config)?;
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT));
            let rows = cmd_compare(&cfg, &methods, &checkpoint, split)?;
            println!("{}", cfg.output_dir.join("compare.csv").display());
            for r in rows {
                println!("{}\tnll={}", r.method.name(), r.report.nll);
            }
        }
        Command::ShowDefaults => print!("{}", default_config_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if Error::is_config_error(&e) { 2 } else { 1 })
        }
    }
}
