use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::commands::Mode;
use crate::config::ExperimentConfig;
use crate::CliError;

/// Output of one `run`. Holds no timestamps or paths, so re-running the
/// embedded config reproduces the file byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub mode: Mode,
    pub qoi_estimate: Vec<f64>,
    /// Monte Carlo standard error per component; empty for quadrature.
    pub standard_error: Vec<f64>,
    /// Forward evaluations of the numerical model.
    pub numerical_solves: usize,
    pub details: serde_json::Value,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub package: String,
    pub version: String,
    pub rng: String,
    pub truth_z: Vec<f64>,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, truth_z: Vec<f64>) -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: hybrid_mcmc::rng::RNG_NAME.to_string(),
            truth_z,
            config: cfg.clone(),
        }
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("report {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: Mode,
    pub runs: usize,
    pub qoi_mean: Vec<f64>,
    /// Sample standard deviation across runs; absent for a single run.
    pub qoi_sd: Option<Vec<f64>>,
    pub estimates: Vec<Vec<f64>>,
}

pub fn aggregate(reports: &[Report]) -> Result<Aggregate, CliError> {
    let first = reports.first().ok_or_else(|| CliError::Config("no reports to aggregate".into()))?;
    let dim = first.qoi_estimate.len();
    if reports.iter().any(|r| r.mode != first.mode || r.qoi_estimate.len() != dim) {
        return Err(CliError::Config("reports differ in mode or QoI dimension".into()));
    }
    let n = reports.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|c| reports.iter().map(|r| r.qoi_estimate[c]).sum::<f64>() / n)
        .collect();
    let sd = (reports.len() > 1).then(|| {
        (0..dim)
            .map(|c| {
                let ss: f64 = reports.iter().map(|r| (r.qoi_estimate[c] - mean[c]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            })
            .collect()
    });
    Ok(Aggregate {
        mode: first.mode,
        runs: reports.len(),
        qoi_mean: mean,
        qoi_sd: sd,
        estimates: reports.iter().map(|r| r.qoi_estimate.clone()).collect(),
    })
}
