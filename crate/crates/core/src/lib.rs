//! Two-level MCMC for Bayesian inverse problems governed by an elliptic PDE.
//! A long chain runs on a cheap surrogate (usually a small MLP) and a short
//! chain on the finite-element solver supplies the correction terms.
//!
//! Modules, bottom-up:
//!
//! * [`fem`]: P1 elements on dyadic meshes of the unit square
//! * [`prior`]: uniform-box and Gaussian priors, coefficient fields
//! * [`model`]: forward maps, observation data, data-misfit potential
//! * [`surrogate`]: MLP datasets, Adam training, model files
//! * [`sampler`]: Metropolis-Hastings kernels and chains
//! * [`hybrid`]: two-level estimators, sample budgets
//! * [`oracle`]: Gauss-Legendre reference expectations

pub mod error;
pub mod fem;
pub mod hybrid;
pub mod model;
pub mod oracle;
pub mod prior;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod surrogate;

pub use error::{Error, Result};
pub use fem::{CoefficientField, FemSolution, Mesh, MeshLevel, ObservationLayout};
pub use hybrid::{HybridEstimate, SampleBudget};
pub use model::{CostClass, ForwardModel, NumericalForward, ObservationSet, Potential, Qoi};
pub use prior::{ParameterVector, PriorSpec};
pub use sampler::{Chain, ChainConfig, Kernel};
pub use surrogate::{Dataset, MlpModel};
