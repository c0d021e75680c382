//! Experiment configuration (JSON, unknown keys rejected).

use std::path::{Path, PathBuf};

use hybrid_mcmc::fem::{experiment_source, MeshLevel, ObservationLayout};
use hybrid_mcmc::hybrid::GaussianForm;
use hybrid_mcmc::model::{numerical_forward, CoefficientQoi, NumericalForward, ParameterQoi, Qoi};
use hybrid_mcmc::prior::{FieldBuilder, PriorSpec};
use hybrid_mcmc::sampler::{ChainConfig, Kernel};
use hybrid_mcmc::surrogate::{AdamParams, ErrorMeasurement, SplitFractions, TargetSpace, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    EllipticUniform,
    EllipticLognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// Target mesh level `L` of the numerical model.
    pub level: u32,
    pub prior: PriorSpec,
    pub observations: ObservationConfig,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub error_estimate: Option<ErrorMeasurement>,
    pub chains: ChainsConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub qoi: QoiConfig,
    #[serde(default)]
    pub gaussian_form: GaussianForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub sigma2: f64,
    /// Seed of the prior draw used as the true parameter.
    pub truth_seed: u64,
    pub noise_seed: u64,
    /// Overrides the drawn truth.
    #[serde(default)]
    pub truth_z: Option<Vec<f64>>,
    /// Mesh level of the model that generates the data.
    pub level: u32,
    /// Observation grid is `m x m` interior points.
    #[serde(default = "default_lattice")]
    pub lattice: usize,
}

fn default_lattice() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    #[serde(default)]
    pub fractions: SplitFractions,
    pub seed: u64,
    #[serde(default)]
    pub target_space: TargetSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurrogateConfig {
    /// Trained network.
    Mlp {
        hidden: Vec<usize>,
        epochs: usize,
        #[serde(default)]
        adam: AdamParams,
        seed: u64,
        /// Defaults to `model.hmlp` in the output directory.
        #[serde(default)]
        model_path: Option<PathBuf>,
    },
    /// A numerical model on another mesh level stands in for the network.
    Numerical { level: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub length: usize,
    pub seed: u64,
    /// Defaults to 10% of `length`.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainsConfig {
    /// Defaults to the prior's reversible kernel.
    #[serde(default)]
    pub kernel: Option<Kernel>,
    #[serde(default = "one")]
    pub thin: usize,
    pub numerical: ChainSpec,
    /// Surrogate chain; also the long chain of the hybrid estimator.
    pub ml: ChainSpec,
    pub hybrid: HybridChains,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridChains {
    /// Base seed of the correction chains.
    pub seed: u64,
    /// Length of each correction chain when no budget is given.
    #[serde(default)]
    pub m_num: Option<usize>,
    /// Chooses both chain lengths from the level and epsilon.
    #[serde(default)]
    pub budget: Option<BudgetConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub epsilon: f64,
    /// Calibration constant; mutually exclusive with `target_m_num`.
    #[serde(default)]
    pub c: Option<f64>,
    /// Calibrates `C` so the correction chains get this many samples.
    #[serde(default)]
    pub target_m_num: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub points: usize,
    pub level: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { points: 32, level: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum QoiConfig {
    /// `Q(z) = z`.
    #[default]
    Parameter,
    /// Coefficient field at fixed points.
    Coefficient { points: Vec<[f64; 2]> },
}

pub fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| cfg_err(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let level = |l: u32, what: &str| {
            MeshLevel::new(l).map_err(|e| cfg_err(format!("{what}: {e}")))
        };
        level(self.level, "level")?;
        level(self.observations.level, "observations.level")?;
        level(self.quadrature.level, "quadrature.level")?;
        self.prior.validate().map_err(|e| cfg_err(format!("prior: {e}")))?;
        match (self.problem, &self.prior) {
            (Problem::EllipticUniform, PriorSpec::Uniform { bounds }) if bounds.len() == 1 => {}
            (Problem::EllipticLognormal, PriorSpec::Gaussian { .. }) => {}
            _ => {
                return Err(cfg_err(
                    "elliptic_uniform needs a one-parameter uniform prior, elliptic_lognormal a gaussian prior",
                ))
            }
        }
        if !(self.observations.sigma2 > 0.0) {
            return Err(cfg_err("observations.sigma2 must be positive"));
        }
        if let Some(z) = &self.observations.truth_z {
            self.prior.parameter(z.clone()).map_err(|e| cfg_err(format!("observations.truth_z: {e}")))?;
        }
        if self.observations.lattice == 0 {
            return Err(cfg_err("observations.lattice must be at least 1"));
        }
        if let SurrogateConfig::Numerical { level: l } = self.surrogate {
            level(l, "surrogate.level")?;
        }
        if let SurrogateConfig::Mlp { epochs, hidden, adam, seed, .. } = &self.surrogate {
            self.train_config_from(hidden, *epochs, *adam, *seed)
                .validate()
                .map_err(|e| cfg_err(format!("surrogate: {e}")))?;
        }
        if let Some(d) = &self.dataset {
            d.fractions.validate().map_err(|e| cfg_err(format!("dataset.fractions: {e}")))?;
            if d.count < hybrid_mcmc::surrogate::MIN_DATASET {
                return Err(cfg_err("dataset.count must be at least 10"));
            }
        }
        if let Some(e) = &self.error_estimate {
            level(e.reference_level, "error_estimate.reference_level")?;
        }
        let kernel = self.kernel();
        kernel.validate().map_err(|e| cfg_err(format!("chains.kernel: {e}")))?;
        kernel.check_prior(&self.prior).map_err(|e| cfg_err(format!("chains.kernel: {e}")))?;
        for (name, spec) in [("numerical", &self.chains.numerical), ("ml", &self.chains.ml)] {
            self.chain_config(spec)
                .validate()
                .map_err(|e| cfg_err(format!("chains.{name}: {e}")))?;
        }
        let h = &self.chains.hybrid;
        match (h.m_num, &h.budget) {
            (Some(0), None) => return Err(cfg_err("chains.hybrid.m_num must be at least 1")),
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(cfg_err("chains.hybrid needs exactly one of m_num or budget")),
        }
        if let Some(b) = &h.budget {
            if b.c.is_some() == b.target_m_num.is_some() {
                return Err(cfg_err("chains.hybrid.budget needs exactly one of c or target_m_num"));
            }
        }
        if self.quadrature.points < 4 || self.quadrature.points > 128 {
            return Err(cfg_err("quadrature.points must lie in 4..=128"));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Kernel {
        self.chains.kernel.unwrap_or_else(|| Kernel::default_for(&self.prior))
    }

    pub fn chain_config(&self, spec: &ChainSpec) -> ChainConfig {
        let mut c = ChainConfig::new(self.kernel(), spec.length, spec.seed);
        if let Some(b) = spec.burn_in {
            c.burn_in = b;
        }
        c.thin = self.chains.thin;
        c
    }

    pub fn layout(&self) -> ObservationLayout {
        ObservationLayout::lattice(self.observations.lattice)
    }

    pub fn builder(&self) -> Result<FieldBuilder, CliError> {
        FieldBuilder::for_prior(&self.prior).map_err(|e| cfg_err(format!("prior: {e}")))
    }

    pub fn numerical_model(&self, level: u32) -> Result<NumericalForward, CliError> {
        let l = MeshLevel::new(level).map_err(|e| cfg_err(e.to_string()))?;
        Ok(numerical_forward(l, self.builder()?, self.layout()).with_source(experiment_source))
    }

    pub fn qoi(&self) -> Result<Box<dyn Qoi>, CliError> {
        Ok(match &self.qoi {
            QoiConfig::Parameter => Box::new(ParameterQoi { dim: self.prior.dim() }),
            QoiConfig::Coefficient { points } => Box::new(CoefficientQoi {
                builder: self.builder()?,
                points: points.clone(),
            }),
        })
    }

    pub fn train_config(&self) -> Option<TrainConfig> {
        match &self.surrogate {
            SurrogateConfig::Mlp {
                hidden,
                epochs,
                adam,
                seed,
                ..
            } => Some(self.train_config_from(hidden, *epochs, *adam, *seed)),
            SurrogateConfig::Numerical { .. } => None,
        }
    }

    fn train_config_from(&self, hidden: &[usize], epochs: usize, adam: AdamParams, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: hidden.to_vec(),
            epochs,
            adam,
            seed,
        }
    }
}
