use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hybrid_mcmc::fem::MeshLevel;
use hybrid_mcmc::hybrid::{
    calibrate_c, hybrid_estimate_gaussian, hybrid_estimate_uniform, select_budget, write_a_terms_csv,
    DualPotentialSample, SampleBudget,
};
use hybrid_mcmc::model::{generate_observations, ForwardModel, ModelPotential, Noise, ObservationSet};
use hybrid_mcmc::oracle::posterior_expectation_quadrature;
use hybrid_mcmc::prior::ParameterVector;
use hybrid_mcmc::rng::{derive_seed, rng_from_seed};
use hybrid_mcmc::sampler::{run_chain, run_dual_chain, Chain, ChainConfig};
use hybrid_mcmc::stats::{batch_means_se, DEFAULT_BATCHES};
use hybrid_mcmc::surrogate::{
    estimate_epsilon, generate_dataset, measure_errors, train_mlp, Dataset, FieldForward, MlpModel,
    SurrogateErrorEstimate, SurrogateForward, SurrogateTarget, TargetSpace, TrainReport,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{cfg_err, ExperimentConfig, SurrogateConfig};
use crate::report::{aggregate, Aggregate, Provenance, Report};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Numerical,
    Ml,
    Hybrid,
    Quadrature,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Numerical => "numerical",
            Self::Ml => "ml",
            Self::Hybrid => "hybrid",
            Self::Quadrature => "quadrature",
        }
    }
}

/// File names inside an output directory.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn observations(&self) -> PathBuf {
        self.root.join("observations.json")
    }

    pub fn dataset_csv(&self) -> PathBuf {
        self.root.join("dataset.csv")
    }

    pub fn dataset_meta(&self) -> PathBuf {
        self.root.join("dataset.json")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.hmlp")
    }

    pub fn train_report(&self) -> PathBuf {
        self.root.join("train_report.json")
    }

    pub fn epsilon(&self) -> PathBuf {
        self.root.join("epsilon.json")
    }

    pub fn mode_dir(&self, mode: Mode) -> PathBuf {
        self.root.join(mode.name())
    }

    fn ensure(dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))
    }
}

pub fn truth(cfg: &ExperimentConfig) -> Result<ParameterVector, CliError> {
    Ok(match &cfg.observations.truth_z {
        Some(z) => cfg.prior.parameter(z.clone())?,
        None => cfg.prior.draw(&mut rng_from_seed(cfg.observations.truth_seed)),
    })
}

/// The synthetic data set, regenerated from its seeds.
pub fn observations(cfg: &ExperimentConfig) -> Result<ObservationSet, CliError> {
    let model = cfg.numerical_model(cfg.observations.level)?;
    Ok(generate_observations(
        &model,
        model.layout(),
        &truth(cfg)?,
        cfg.observations.sigma2,
        cfg.observations.noise_seed,
        Noise::Gaussian,
    )?)
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub observations: usize,
    pub dataset_rows: Option<usize>,
}

/// Writes the observation set and, when configured, the training dataset.
pub fn generate_data(cfg: &ExperimentConfig, out: &OutputLayout) -> Result<GenerateSummary, CliError> {
    OutputLayout::ensure(&out.root)?;
    let obs = observations(cfg)?;
    obs.write_json(&out.observations())?;
    let rows = match &cfg.dataset {
        Some(d) => {
            let data = build_dataset(cfg, d)?;
            data.write_files(&out.dataset_csv(), &out.dataset_meta())?;
            Some(data.len())
        }
        None => None,
    };
    Ok(GenerateSummary {
        observations: obs.len(),
        dataset_rows: rows,
    })
}

fn build_dataset(cfg: &ExperimentConfig, d: &crate::config::DatasetConfig) -> Result<Dataset, CliError> {
    let model = cfg.numerical_model(cfg.level)?;
    let data = match d.target_space {
        TargetSpace::Observations => generate_dataset(&model, d.target_space, &cfg.prior, d.count, d.fractions, d.seed)?,
        TargetSpace::Field => {
            generate_dataset(&FieldForward(model), d.target_space, &cfg.prior, d.count, d.fractions, d.seed)?
        }
    };
    Ok(data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutput {
    pub training: TrainReport,
    pub error_estimate: Option<SurrogateErrorEstimate>,
    pub provenance: Provenance,
}

/// Trains the network on the generated dataset and saves model and report.
pub fn train(cfg: &ExperimentConfig, out: &OutputLayout) -> Result<TrainOutput, CliError> {
    let tc = cfg
        .train_config()
        .ok_or_else(|| cfg_err("train needs surrogate.kind = \"mlp\""))?;
    let (csv, meta) = (out.dataset_csv(), out.dataset_meta());
    if !csv.exists() || !meta.exists() {
        return Err(cfg_err(format!(
            "missing dataset {}; run generate-data first",
            csv.display()
        )));
    }
    let data = Dataset::read_files(&csv, &meta)?;
    let (model, training) = train_mlp(&data, &tc)?;
    let path = model_path(cfg, out);
    model.save(&path)?;

    let error_estimate = match &cfg.error_estimate {
        Some(m) => {
            let sur = SurrogateForward::new(model, surrogate_target(cfg, data.target_space)?)?;
            Some(measure_errors(&sur, &cfg.numerical_model(cfg.level)?, &cfg.prior, m)?)
        }
        None => None,
    };
    let report = TrainOutput {
        training,
        error_estimate,
        provenance: Provenance::new(cfg, truth(cfg)?.values().to_vec()),
    };
    std::fs::write(out.train_report(), serde_json::to_string_pretty(&report).expect("serializes") + "\n")?;
    Ok(report)
}

/// Measures the surrogate and level-`L` errors and writes epsilon.
pub fn measure_epsilon(cfg: &ExperimentConfig, out: &OutputLayout) -> Result<SurrogateErrorEstimate, CliError> {
    let m = cfg
        .error_estimate
        .ok_or_else(|| cfg_err("estimate-epsilon with a config needs an error_estimate section"))?;
    let sur = match surrogate(cfg, out)? {
        Surrogate::Mlp(s) => s,
        Surrogate::Numerical(_) => return Err(cfg_err("epsilon is measured for a trained surrogate only")),
    };
    let est = measure_errors(&sur, &cfg.numerical_model(cfg.level)?, &cfg.prior, &m)?;
    OutputLayout::ensure(&out.root)?;
    std::fs::write(out.epsilon(), serde_json::to_string_pretty(&est).expect("serializes") + "\n")?;
    Ok(est)
}

pub fn epsilon_from_errors(err_ml: f64, err_num: f64) -> Result<SurrogateErrorEstimate, CliError> {
    Ok(estimate_epsilon(err_ml, err_num)?)
}

fn model_path(cfg: &ExperimentConfig, out: &OutputLayout) -> PathBuf {
    match &cfg.surrogate {
        SurrogateConfig::Mlp {
            model_path: Some(p), ..
        } => p.clone(),
        _ => out.model(),
    }
}

fn dataset_target(cfg: &ExperimentConfig) -> TargetSpace {
    cfg.dataset.as_ref().map_or(TargetSpace::Observations, |d| d.target_space)
}

fn surrogate_target(cfg: &ExperimentConfig, t: TargetSpace) -> Result<SurrogateTarget, CliError> {
    Ok(match t {
        TargetSpace::Observations => SurrogateTarget::Observations,
        TargetSpace::Field => SurrogateTarget::Field {
            level: MeshLevel::new(cfg.level)?,
            layout: cfg.layout(),
        },
    })
}

enum Surrogate {
    Mlp(SurrogateForward),
    Numerical(hybrid_mcmc::NumericalForward),
}

impl Surrogate {
    fn forward(&self) -> &dyn ForwardModel {
        match self {
            Self::Mlp(s) => s,
            Self::Numerical(n) => n,
        }
    }
}

fn surrogate(cfg: &ExperimentConfig, out: &OutputLayout) -> Result<Surrogate, CliError> {
    match &cfg.surrogate {
        SurrogateConfig::Numerical { level } => Ok(Surrogate::Numerical(cfg.numerical_model(*level)?)),
        SurrogateConfig::Mlp { .. } => {
            let path = model_path(cfg, out);
            if !path.exists() {
                return Err(cfg_err(format!(
                    "no trained model at {}; run train first",
                    path.display()
                )));
            }
            let model = MlpModel::load(&path)?;
            let s = SurrogateForward::new(model, surrogate_target(cfg, dataset_target(cfg))?)?;
            if s.output_dim() != cfg.layout().len() {
                return Err(cfg_err("surrogate output does not match the observation layout"));
            }
            Ok(Surrogate::Mlp(s))
        }
    }
}

fn write_chain(dir: &Path, name: &str, chain: &Chain) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(dir.join(format!("chain_{name}.csv")))?);
    chain.write_csv(&mut f)?;
    f.flush()?;
    let summary = chain.summary()?;
    std::fs::write(
        dir.join(format!("chain_{name}.json")),
        serde_json::to_string_pretty(&summary).expect("serializes") + "\n",
    )?;
    Ok(())
}

fn chain_statistics(chain: &Chain) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mean = chain.qoi_mean()?;
    let se = (0..chain.qoi_dim())
        .map(|c| batch_means_se(&chain.qoi_series(c), DEFAULT_BATCHES))
        .collect();
    Ok((mean, se))
}

/// Lengths of the long surrogate chain and of each correction chain.
pub fn hybrid_lengths(cfg: &ExperimentConfig) -> Result<(usize, usize, Option<SampleBudget>), CliError> {
    let h = &cfg.chains.hybrid;
    match (&h.budget, h.m_num) {
        (Some(b), _) => {
            let c = match (b.c, b.target_m_num) {
                (Some(c), None) => c,
                (None, Some(m)) => calibrate_c(b.epsilon, m)?,
                _ => return Err(cfg_err("budget needs exactly one of c or target_m_num")),
            };
            let budget = select_budget(cfg.level, b.epsilon, c)?;
            Ok((budget.m_ml, budget.m_num, Some(budget)))
        }
        (None, Some(m)) => Ok((cfg.chains.ml.length, m, None)),
        (None, None) => Err(cfg_err("chains.hybrid needs m_num or budget")),
    }
}

/// Seeds of the numerical correction chain and the short surrogate chain.
pub fn correction_seeds(cfg: &ExperimentConfig) -> (u64, u64) {
    (derive_seed(cfg.chains.hybrid.seed, 0), derive_seed(cfg.chains.hybrid.seed, 1))
}

/// One run of `mode`. Chain dumps go to `dir` when given.
pub fn run_once(
    cfg: &ExperimentConfig,
    mode: Mode,
    out: &OutputLayout,
    dir: Option<&Path>,
) -> Result<Report, CliError> {
    cfg.validate()?;
    let obs = observations(cfg)?;
    let truth_z = truth(cfg)?.values().to_vec();
    let qoi = cfg.qoi()?;
    let provenance = Provenance::new(cfg, truth_z);
    if let Some(d) = dir {
        OutputLayout::ensure(d)?;
    }

    let report = match mode {
        Mode::Numerical | Mode::Ml => {
            let sur;
            let num;
            let (model, spec): (&dyn ForwardModel, _) = if mode == Mode::Numerical {
                num = cfg.numerical_model(cfg.level)?;
                (&num, &cfg.chains.numerical)
            } else {
                sur = surrogate(cfg, out)?;
                (sur.forward(), &cfg.chains.ml)
            };
            let target = ModelPotential::new(model, &obs);
            let chain = run_chain(&target, &cfg.prior, &cfg.chain_config(spec), qoi.as_ref())?;
            if let Some(d) = dir {
                write_chain(d, mode.name(), &chain)?;
            }
            let (mean, se) = chain_statistics(&chain)?;
            let solves = if model.cost_class() == hybrid_mcmc::CostClass::Numerical {
                chain.target_evaluations
            } else {
                0
            };
            Report {
                mode,
                qoi_estimate: mean,
                standard_error: se,
                numerical_solves: solves,
                details: json!({ "chain": chain.summary()? }),
                provenance,
            }
        }
        Mode::Hybrid => run_hybrid(cfg, out, dir, &obs, qoi.as_ref(), provenance)?,
        Mode::Quadrature => {
            let model = cfg.numerical_model(cfg.quadrature.level)?;
            let target = ModelPotential::new(&model, &obs);
            let est = posterior_expectation_quadrature(&target, &cfg.prior, qoi.as_ref(), cfg.quadrature.points)?;
            let solves = cfg.quadrature.points.pow(cfg.prior.dim() as u32);
            Report {
                mode,
                qoi_estimate: est,
                standard_error: vec![],
                numerical_solves: solves,
                details: json!({ "points": cfg.quadrature.points, "level": cfg.quadrature.level }),
                provenance,
            }
        }
    };
    if let Some(d) = dir {
        report.write(&d.join("report.json"))?;
    }
    Ok(report)
}

fn run_hybrid(
    cfg: &ExperimentConfig,
    out: &OutputLayout,
    dir: Option<&Path>,
    obs: &ObservationSet,
    qoi: &dyn hybrid_mcmc::Qoi,
    provenance: Provenance,
) -> Result<Report, CliError> {
    let num_model = cfg.numerical_model(cfg.level)?;
    let sur = surrogate(cfg, out)?;
    let phi_num = ModelPotential::new(&num_model, obs);
    let phi_ml = ModelPotential::new(sur.forward(), obs);
    let (m_ml, m_num, budget) = hybrid_lengths(cfg)?;
    let (seed_num, seed_short) = correction_seeds(cfg);
    let long_cfg = ChainConfig {
        length: m_ml,
        burn_in: if budget.is_some() { m_ml / 10 } else { cfg.chain_config(&cfg.chains.ml).burn_in },
        ..cfg.chain_config(&cfg.chains.ml)
    };
    let num_cfg = ChainConfig {
        thin: cfg.chains.thin,
        ..ChainConfig::new(cfg.kernel(), m_num, seed_num)
    };
    let short_cfg = ChainConfig { seed: seed_short, ..num_cfg };
    let gaussian = !cfg.prior.is_uniform();

    let (long, (num, short)) = rayon::join(
        || run_chain(&phi_ml, &cfg.prior, &long_cfg, qoi),
        || {
            rayon::join(
                || run_dual_chain(&phi_num, &phi_ml, &cfg.prior, &num_cfg, qoi),
                || {
                    gaussian
                        .then(|| run_dual_chain(&phi_ml, &phi_num, &cfg.prior, &short_cfg, qoi))
                        .transpose()
                },
            )
        },
    );
    let (long, num, short) = (long?, num?, short?);
    let num_samples = DualPotentialSample::from_num_chain(&num)?;
    let short_samples = short.as_ref().map(DualPotentialSample::from_ml_chain).transpose()?;
    let estimate = match &short_samples {
        None => hybrid_estimate_uniform(&num_samples, &long.qoi)?,
        Some(s) => hybrid_estimate_gaussian(&num_samples, s, &long.qoi, cfg.gaussian_form)?,
    };
    let solves = num.target_evaluations + short.as_ref().map_or(0, |c| c.companion_evaluations);
    // a coarse-mesh stand-in surrogate is a solver too; its cost is kept apart
    let sur_is_numerical = matches!(sur, Surrogate::Numerical(_));

    if let Some(d) = dir {
        write_chain(d, "numerical", &num)?;
        write_chain(d, "ml_long", &long)?;
        if let Some(s) = &short {
            write_chain(d, "ml_short", s)?;
        }
        let mut f = BufWriter::new(File::create(d.join("a_terms.csv"))?);
        let mut sets: Vec<(&str, &[DualPotentialSample])> = vec![("numerical", &num_samples)];
        if let Some(s) = &short_samples {
            sets.push(("ml_short", s));
        }
        write_a_terms_csv(&mut f, &sets)?;
        f.flush()?;
    }

    let mut chains = serde_json::Map::new();
    chains.insert("numerical".into(), serde_json::to_value(num.summary()?).expect("serializes"));
    chains.insert("ml_long".into(), serde_json::to_value(long.summary()?).expect("serializes"));
    if let Some(s) = &short {
        chains.insert("ml_short".into(), serde_json::to_value(s.summary()?).expect("serializes"));
    }
    Ok(Report {
        mode: Mode::Hybrid,
        qoi_estimate: estimate.total.clone(),
        standard_error: estimate.standard_errors.combined.clone(),
        numerical_solves: solves,
        details: json!({
            "estimate": estimate,
            "budget": budget,
            "chains": chains,
            "surrogate_solver_evaluations": if sur_is_numerical {
                long.target_evaluations + num.companion_evaluations + short.as_ref().map_or(0, |c| c.target_evaluations)
            } else { 0 },
        }),
        provenance,
    })
}

/// The config of repeat `r`: every chain seed is derived from its base seed.
pub fn repeat_config(cfg: &ExperimentConfig, r: usize) -> ExperimentConfig {
    let mut c = cfg.clone();
    let stream = r as u64;
    c.chains.numerical.seed = derive_seed(cfg.chains.numerical.seed, stream);
    c.chains.ml.seed = derive_seed(cfg.chains.ml.seed, stream);
    c.chains.hybrid.seed = derive_seed(cfg.chains.hybrid.seed, stream);
    c
}

/// `repeats` independently seeded runs in parallel, plus their aggregate.
pub fn run_repeats(
    cfg: &ExperimentConfig,
    mode: Mode,
    out: &OutputLayout,
    repeats: usize,
) -> Result<(Vec<Report>, Aggregate), CliError> {
    if repeats == 0 {
        return Err(cfg_err("--repeats must be at least 1"));
    }
    let base = out.mode_dir(mode);
    let reports = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let c = repeat_config(cfg, r);
            run_once(&c, mode, out, Some(&base.join(format!("run_{r}"))))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let agg = aggregate(&reports)?;
    std::fs::write(
        base.join("aggregate.json"),
        serde_json::to_string_pretty(&agg).expect("serializes") + "\n",
    )?;
    Ok((reports, agg))
}

/// `run` subcommand: one run in `<out>/<mode>/`, or repeats.
pub fn run(
    cfg: &ExperimentConfig,
    mode: Mode,
    out: &OutputLayout,
    repeats: Option<usize>,
) -> Result<Vec<Report>, CliError> {
    match repeats {
        None => Ok(vec![run_once(cfg, mode, out, Some(&out.mode_dir(mode)))?]),
        Some(n) => Ok(run_repeats(cfg, mode, out, n)?.0),
    }
}
