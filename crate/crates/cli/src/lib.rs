//! Workflow behind the `hybrid-mcmc` binary: data generation, surrogate
//! training, sampling runs and report aggregation, all driven by one JSON
//! experiment config.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{
    generate_data, observations, run, run_once, run_repeats, train, Mode, OutputLayout,
};
pub use config::ExperimentConfig;
pub use report::{aggregate, Aggregate, Report};

/// Environment variable that sets the worker-thread count.
pub const WORKERS_ENV: &str = "HYBRID_MCMC_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training failure: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Training(_) => 4,
        }
    }
}

impl From<hybrid_mcmc::Error> for CliError {
    fn from(e: hybrid_mcmc::Error) -> Self {
        use hybrid_mcmc::Error as E;
        match e {
            E::NonFiniteLoss { .. } => Self::Training(e.to_string()),
            E::NonPositiveCoefficient { .. }
            | E::SingularSystem { .. }
            | E::SolverDidNotConverge { .. }
            | E::Empty => Self::Numerical(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Config(format!("i/o: {e}"))
    }
}
