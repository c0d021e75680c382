use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hybrid_mcmc_cli::commands::{epsilon_from_errors, generate_data, measure_epsilon, run, train, Mode, OutputLayout};
use hybrid_mcmc_cli::{aggregate, CliError, ExperimentConfig, Report, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "hybrid-mcmc", version, about = "Two-level MCMC with a neural surrogate for elliptic inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the observation set and the training dataset.
    GenerateData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train the surrogate network on the generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Estimate the posterior expectation.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Surrogate accuracy exponent, from two errors or by measurement.
    EstimateEpsilon {
        #[arg(long, requires = "err_num", conflicts_with = "config")]
        err_ml: Option<f64>,
        #[arg(long, requires = "err_ml", conflicts_with = "config")]
        err_num: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Combine report files.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        aggregate: Vec<PathBuf>,
    },
}

fn workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn print_json<T: serde::Serialize>(v: &T) {
    use std::io::Write;
    // a closed pipe on stdout is not an error for us
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("serializes"));
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    workers()?;
    match cli.command {
        Command::GenerateData { config, out } => {
            let cfg = ExperimentConfig::read(&config)?;
            print_json(&generate_data(&cfg, &OutputLayout::new(out))?);
        }
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::read(&config)?;
            let r = train(&cfg, &OutputLayout::new(out))?;
            print_json(&serde_json::json!({
                "final_train_loss": r.training.final_train_loss,
                "final_validation_loss": r.training.final_validation_loss,
                "test": r.training.test,
                "error_estimate": r.error_estimate,
            }));
        }
        Command::Run { config, out, mode, repeats } => {
            let cfg = ExperimentConfig::read(&config)?;
            let reports = run(&cfg, mode, &OutputLayout::new(out), repeats)?;
            if reports.len() == 1 {
                let r = &reports[0];
                print_json(&serde_json::json!({
                    "mode": r.mode,
                    "qoi_estimate": r.qoi_estimate,
                    "standard_error": r.standard_error,
                    "numerical_solves": r.numerical_solves,
                }));
            } else {
                print_json(&aggregate(&reports)?);
            }
        }
        Command::EstimateEpsilon { err_ml, err_num, config, out } => match (err_ml, err_num, config) {
            (Some(a), Some(b), None) => print_json(&epsilon_from_errors(a, b)?),
            (None, None, Some(c)) => {
                let cfg = ExperimentConfig::read(&c)?;
                print_json(&measure_epsilon(&cfg, &OutputLayout::new(out))?);
            }
            _ => return Err(CliError::Config("give --err-ml and --err-num, or --config".into())),
        },
        Command::Report { aggregate: files } => {
            let reports = files.iter().map(|f| Report::read(f)).collect::<Result<Vec<_>, _>>()?;
            print_json(&aggregate(&reports)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
