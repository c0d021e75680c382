//! Fixtures shared by the benchmarks.

use hybrid_mcmc::fem::{experiment_source, MeshLevel, ObservationLayout};
use hybrid_mcmc::model::{generate_observations, numerical_forward, Noise};
use hybrid_mcmc::prior::{FieldBuilder, PriorSpec};
use hybrid_mcmc::{NumericalForward, ObservationSet};

pub fn uniform_prior() -> PriorSpec {
    PriorSpec::uniform(vec![[0.0, 1.0]])
}

pub fn experiment_model(level: u32) -> NumericalForward {
    numerical_forward(MeshLevel::new(level).unwrap(), FieldBuilder::Uniform, ObservationLayout::default_experiment())
        .with_source(experiment_source)
}

pub fn experiment_data(model: &NumericalForward) -> ObservationSet {
    let truth = uniform_prior().parameter(vec![0.3]).unwrap();
    generate_observations(model, model.layout(), &truth, 1e-3, 7, Noise::Gaussian).unwrap()
}
