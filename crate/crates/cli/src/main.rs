use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kfpls_cli::commands::{self, parse_grid, SweepAxis};
use kfpls_cli::config::{preset, resolve, FileConfig, Settings};
use kfpls_cli::{CliError, Result};

/// Kernel PLS with kernel parameters learned by Kernel Flows.
#[derive(Parser)]
#[command(name = "kfpls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case study: 1 peaks regression, 2 circles classification,
    /// 3 and 4 need --csv.
    Case {
        case: u8,
        #[command(flatten)]
        common: Common,
    },
    /// Optimize the kernel and fit a model on a CSV file.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Predict a CSV file with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "predictions.csv")]
        output: PathBuf,
    },
    /// Vary one parameter over a grid.
    Sweep {
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        case: Option<u8>,
        #[command(flatten)]
        common: Common,
    },
    /// Averaged loss over a sigma by delta grid.
    LossSurface {
        #[arg(long)]
        sigmas: String,
        #[arg(long)]
        deltas: String,
        #[arg(long)]
        case: Option<u8>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file with run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated kernel families.
    #[arg(long)]
    kernel: Option<String>,
    /// Final latent-variable count; selected by line search when absent.
    #[arg(long)]
    n_lv: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    update_rule: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Comma-separated response columns (names or 0-based indices).
    #[arg(long)]
    response: Option<String>,
    /// regression or classification.
    #[arg(long)]
    task: Option<String>,
    /// Initial kernel width.
    #[arg(long)]
    sigma: Option<f64>,
    /// Initial ridge.
    #[arg(long)]
    delta: Option<f64>,
    /// Latent variables used inside the Kernel Flows loss.
    #[arg(long)]
    kf_n_lv: Option<usize>,
    #[arg(long)]
    n_subsamples: Option<usize>,
    #[arg(long)]
    batch_fraction: Option<f64>,
}

impl Common {
    fn overrides(&self) -> FileConfig {
        FileConfig {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            kernel: self.kernel.clone(),
            n_lv: self.n_lv,
            iterations: self.iterations,
            update_rule: self.update_rule.clone(),
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            csv: self.csv.clone(),
            response: self.response.clone(),
            task: self.task.clone(),
            sigma: self.sigma,
            delta: self.delta,
            kf_n_lv: self.kf_n_lv,
            n_subsamples: self.n_subsamples,
            batch_fraction: self.batch_fraction,
            ..FileConfig::default()
        }
    }

    /// Preset for the case, then the config file, then flags.
    fn settings(&self, case: Option<u8>) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let case = case.or(file.case);
        let merged = preset(case)?.merge(file).merge(self.overrides());
        resolve(FileConfig { case, ..merged })
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Case { case, common } => {
            let settings = common.settings(Some(case))?;
            let r = commands::cmd_case(&settings)?;
            log::info!("test report: {:?}", r.kf_pls.report);
            println!("{}", settings.out_dir.join("report.json").display());
        }
        Command::Optimize { common } => {
            let settings = common.settings(None)?;
            if common.csv.is_none() && !matches!(settings.source, kfpls_cli::config::Source::Csv { .. }) {
                return Err(CliError::Usage("optimize needs --csv".into()));
            }
            commands::cmd_optimize(&settings)?;
            println!("{}", settings.out_dir.join("report.json").display());
        }
        Command::Predict { model, csv, output } => {
            commands::cmd_predict(&model, &csv, &output)?;
            println!("{}", output.display());
        }
        Command::Sweep { axis, grid, case, common } => {
            let axis: SweepAxis = axis.parse()?;
            let grid = parse_grid(&grid)?;
            let settings = common.settings(case)?;
            commands::cmd_sweep(&settings, axis, &grid)?;
            println!("{}", settings.out_dir.join("sweep.csv").display());
        }
        Command::LossSurface { sigmas, deltas, case, common } => {
            let sigmas = parse_grid(&sigmas)?;
            let deltas = parse_grid(&deltas)?;
            let settings = common.settings(case)?;
            commands::cmd_loss_surface(&settings, &sigmas, &deltas)?;
            println!("{}", settings.out_dir.join("loss_surface.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
