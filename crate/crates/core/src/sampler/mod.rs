//! Metropolis-Hastings sampling of `exp(-Phi) * prior`.
//!
//! Both kernels leave the prior invariant on their own (reflected random
//! walk on a box, preconditioned Crank-Nicolson for `N(0, I)`), so the
//! acceptance ratio only involves the potential.

mod chain;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::Potential;
use crate::prior::{Domain, ParameterVector, PriorSpec};
use crate::rng::Rng;

pub use chain::{
    chain_mean, chain_mean_vec, run_chain, run_dual_chain, Chain, ChainSummary,
};
pub use crate::stats::effective_sample_size;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// Gaussian random walk folded back into the prior box.
    RwReflect { step: f64 },
    /// `z' = sqrt(1 - beta^2) z + beta xi`, `xi ~ N(0, I)`.
    Pcn { beta: f64 },
}

impl Kernel {
    pub const DEFAULT_RW_STEP: f64 = 0.1;
    pub const DEFAULT_PCN_BETA: f64 = 0.2;

    pub fn default_for(prior: &PriorSpec) -> Self {
        match prior {
            PriorSpec::Uniform { .. } => Self::RwReflect {
                step: Self::DEFAULT_RW_STEP,
            },
            PriorSpec::Gaussian { .. } => Self::Pcn {
                beta: Self::DEFAULT_PCN_BETA,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::RwReflect { step } if !(step > 0.0 && step.is_finite()) => {
                Err(invalid(format!("random-walk step must be positive, got {step}")))
            }
            Self::Pcn { beta } if !(beta > 0.0 && beta <= 1.0) => {
                Err(invalid(format!("pCN beta must lie in (0, 1], got {beta}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the kernel is reversible with respect to `prior`.
    pub fn check_prior(&self, prior: &PriorSpec) -> Result<()> {
        match (self, prior) {
            (Self::RwReflect { .. }, PriorSpec::Uniform { .. })
            | (Self::Pcn { .. }, PriorSpec::Gaussian { .. }) => Ok(()),
            _ => Err(invalid(
                "kernel does not preserve the prior: use rw_reflect for uniform, pcn for gaussian",
            )),
        }
    }
}

/// Folds `x` into `[lo, hi]` by repeated reflection at the walls.
pub fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let y = (x - lo).rem_euclid(2.0 * w);
    lo + if y > w { 2.0 * w - y } else { y }
}

pub fn propose(kernel: &Kernel, z: &ParameterVector, rng: &mut Rng) -> Result<ParameterVector> {
    let values = match (kernel, z.domain()) {
        (Kernel::RwReflect { step }, Domain::UniformBox(bounds)) => z
            .values()
            .iter()
            .zip(bounds.iter())
            .map(|(&x, &[lo, hi])| {
                let xi: f64 = rng.sample(StandardNormal);
                reflect(x + step * xi, lo, hi)
            })
            .collect(),
        (Kernel::Pcn { beta }, Domain::GaussianIid) => {
            let keep = (1.0 - beta * beta).sqrt();
            z.values()
                .iter()
                .map(|&x| {
                    let xi: f64 = rng.sample(StandardNormal);
                    keep * x + beta * xi
                })
                .collect()
        }
        _ => return Err(invalid("kernel incompatible with parameter domain")),
    };
    z.with_values(values)
}

/// `min(1, exp(phi_current - phi_proposed))`.
pub fn acceptance_probability(phi_current: f64, phi_proposed: f64) -> f64 {
    let d = phi_current - phi_proposed;
    if d >= 0.0 {
        1.0
    } else {
        d.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub z: ParameterVector,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: ChainState,
    pub accepted: bool,
    /// Proposal potential was NaN or infinite; counted as a rejection.
    pub non_finite: bool,
}

/// One Metropolis-Hastings transition. A uniform variate is consumed on
/// every step so the random stream does not depend on acceptance history.
pub fn mh_step(
    kernel: &Kernel,
    current: &ChainState,
    target: &dyn Potential,
    rng: &mut Rng,
) -> Result<StepOutcome> {
    if !current.phi.is_finite() {
        return Err(invalid("current potential is not finite"));
    }
    let proposal = propose(kernel, &current.z, rng)?;
    let u: f64 = rng.random();
    let phi = target.potential(&proposal)?;
    if !phi.is_finite() {
        return Ok(StepOutcome {
            state: current.clone(),
            accepted: false,
            non_finite: true,
        });
    }
    if u < acceptance_probability(current.phi, phi) {
        Ok(StepOutcome {
            state: ChainState { z: proposal, phi },
            accepted: true,
            non_finite: false,
        })
    } else {
        Ok(StepOutcome {
            state: current.clone(),
            accepted: false,
            non_finite: false,
        })
    }
}

/// Sampler settings. `length` counts recorded states after burn-in and
/// thinning; the chain runs `burn_in + length * thin` transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub kernel: Kernel,
    pub length: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub thin: usize,
}

fn one() -> usize {
    1
}

impl ChainConfig {
    /// Burn-in of 10% of `length`, no thinning.
    pub fn new(kernel: Kernel, length: usize, seed: u64) -> Self {
        Self {
            kernel,
            length,
            burn_in: length / 10,
            seed,
            thin: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.length == 0 {
            return Err(invalid("chain length must be at least 1"));
        }
        if self.burn_in >= self.length && self.burn_in > 0 {
            return Err(invalid("burn_in must be smaller than length"));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be at least 1".into()));
        }
        Ok(())
    }

    pub fn transitions(&self) -> usize {
        self.burn_in + self.length * self.thin
    }
}
