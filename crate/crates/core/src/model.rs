//! Forward maps, observation data and the data-misfit potential.

use std::fmt;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::{
    assemble_and_solve, experiment_source, observe, BoundarySpec, FemSolution, Mesh, MeshLevel,
    ObservationLayout,
};
use crate::prior::{FieldBuilder, ParameterVector};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostClass {
    Numerical,
    Surrogate,
}

impl fmt::Display for CostClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Numerical => "numerical",
            Self::Surrogate => "surrogate",
        })
    }
}

/// Parameter-to-observation map. Implementations are deterministic per `z`
/// and read-only, so one instance can serve many workers.
pub trait ForwardModel: Send + Sync {
    fn evaluate(&self, z: &ParameterVector) -> Result<Vec<f64>>;

    fn cost_class(&self) -> CostClass;

    /// Length of the observation vector.
    fn output_dim(&self) -> usize;
}

impl<M: ForwardModel + ?Sized> ForwardModel for &M {
    fn evaluate(&self, z: &ParameterVector) -> Result<Vec<f64>> {
        (**self).evaluate(z)
    }
    fn cost_class(&self) -> CostClass {
        (**self).cost_class()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
}

impl<M: ForwardModel + ?Sized> ForwardModel for Box<M> {
    fn evaluate(&self, z: &ParameterVector) -> Result<Vec<f64>> {
        (**self).evaluate(z)
    }
    fn cost_class(&self) -> CostClass {
        (**self).cost_class()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
}

/// Build field, solve the elliptic problem on a level-`l` mesh, observe.
#[derive(Debug, Clone)]
pub struct NumericalForward {
    mesh: Mesh,
    builder: FieldBuilder,
    layout: ObservationLayout,
    source: fn([f64; 2]) -> f64,
    bc: BoundarySpec,
}

pub fn numerical_forward(
    level: MeshLevel,
    builder: FieldBuilder,
    layout: ObservationLayout,
) -> NumericalForward {
    NumericalForward::new(level, builder, layout)
}

impl NumericalForward {
    pub fn new(level: MeshLevel, builder: FieldBuilder, layout: ObservationLayout) -> Self {
        Self {
            mesh: Mesh::new(level),
            builder,
            layout,
            source: experiment_source,
            bc: BoundarySpec::default(),
        }
    }

    pub fn with_source(mut self, source: fn([f64; 2]) -> f64) -> Self {
        self.source = source;
        self
    }

    pub fn level(&self) -> MeshLevel {
        self.mesh.level()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn builder(&self) -> &FieldBuilder {
        &self.builder
    }

    /// Full nodal solution `u^l(z)`.
    pub fn solve(&self, z: &ParameterVector) -> Result<FemSolution> {
        let k = self.builder.build(z, &self.mesh)?;
        let source = self.source;
        assemble_and_solve(&self.mesh, &k, &source, self.bc)
    }

    /// Same problem on another mesh level.
    pub fn at_level(&self, level: MeshLevel) -> Self {
        Self {
            mesh: Mesh::new(level),
            ..self.clone()
        }
    }
}

impl ForwardModel for NumericalForward {
    fn evaluate(&self, z: &ParameterVector) -> Result<Vec<f64>> {
        observe(&self.solve(z)?, &self.layout)
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Numerical
    }

    fn output_dim(&self) -> usize {
        self.layout.len()
    }
}

/// Observed data `delta = G(z_true) + noise`, noise `N(0, sigma2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSet {
    pub sigma2: f64,
    pub layout: ObservationLayout,
    pub delta: Vec<f64>,
    /// Recorded for reference; never used by inference.
    pub truth_z: Vec<f64>,
    /// Noise seed.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Gaussian,
    /// Exact model output, for recovery tests. `sigma2` still scales the potential.
    None,
}

pub fn generate_observations(
    model: &dyn ForwardModel,
    layout: &ObservationLayout,
    truth_z: &ParameterVector,
    sigma2: f64,
    seed: u64,
    noise: Noise,
) -> Result<ObservationSet> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    let mut delta = model.evaluate(truth_z)?;
    if delta.len() != layout.len() {
        return Err(Error::DimensionMismatch {
            expected: layout.len(),
            got: delta.len(),
        });
    }
    if noise == Noise::Gaussian {
        let mut rng = rng_from_seed(seed);
        let sd = sigma2.sqrt();
        for d in &mut delta {
            *d += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(ObservationSet {
        sigma2,
        layout: layout.clone(),
        delta,
        truth_z: truth_z.values().to_vec(),
        seed,
    })
}

impl ObservationSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(invalid("sigma2 must be positive"));
        }
        if self.delta.len() != self.layout.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.len(),
                got: self.delta.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// `Phi = |delta - g|^2 / (2 sigma2)`.
    pub fn misfit(&self, g: &[f64]) -> Result<f64> {
        if g.len() != self.delta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.delta.len(),
                got: g.len(),
            });
        }
        let ss: f64 = self
            .delta
            .iter()
            .zip(g)
            .map(|(d, g)| (d - g) * (d - g))
            .sum();
        Ok(0.5 * ss / self.sigma2)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let obs: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        obs.validate()?;
        Ok(obs)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

pub fn potential(model: &dyn ForwardModel, z: &ParameterVector, obs: &ObservationSet) -> Result<f64> {
    obs.misfit(&model.evaluate(z)?)
}

/// Negative log-likelihood `z -> Phi(z)` targeted by the samplers.
pub trait Potential: Send + Sync {
    fn potential(&self, z: &ParameterVector) -> Result<f64>;
}

/// `Phi(z) = misfit(model(z))`.
pub struct ModelPotential<'a> {
    model: &'a dyn ForwardModel,
    obs: &'a ObservationSet,
}

impl<'a> ModelPotential<'a> {
    pub fn new(model: &'a dyn ForwardModel, obs: &'a ObservationSet) -> Self {
        Self { model, obs }
    }

    pub fn model(&self) -> &dyn ForwardModel {
        self.model
    }
}

impl Potential for ModelPotential<'_> {
    fn potential(&self, z: &ParameterVector) -> Result<f64> {
        potential(self.model, z, self.obs)
    }
}

/// Closed-form potential over raw coordinates.
pub struct FnPotential<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Potential for FnPotential<F> {
    fn potential(&self, z: &ParameterVector) -> Result<f64> {
        Ok((self.0)(z.values()))
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn potential(&self, z: &ParameterVector) -> Result<f64> {
        (**self).potential(z)
    }
}

/// Quantity of interest; scalar QoIs have `dim() == 1`.
pub trait Qoi: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, z: &ParameterVector) -> Vec<f64>;
}

/// `Q(z) = z`, component-wise.
#[derive(Debug, Clone, Copy)]
pub struct ParameterQoi {
    pub dim: usize,
}

impl Qoi for ParameterQoi {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, z: &ParameterVector) -> Vec<f64> {
        z.values().to_vec()
    }
}

/// Coefficient `K(z)(x)` at fixed points.
#[derive(Debug, Clone)]
pub struct CoefficientQoi {
    pub builder: FieldBuilder,
    pub points: Vec<[f64; 2]>,
}

impl Qoi for CoefficientQoi {
    fn dim(&self) -> usize {
        self.points.len()
    }

    fn evaluate(&self, z: &ParameterVector) -> Vec<f64> {
        self.points
            .iter()
            .map(|&x| self.builder.value_at(z, x))
            .collect()
    }
}

/// Scalar closed-form QoI over raw coordinates.
pub struct FnQoi<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Qoi for FnQoi<F> {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, z: &ParameterVector) -> Vec<f64> {
        vec![(self.0)(z.values())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::CoefficientField;
    use crate::prior::PriorSpec;

    fn setup(level: u32) -> (NumericalForward, PriorSpec) {
        let model = numerical_forward(
            MeshLevel::new(level).unwrap(),
            FieldBuilder::Uniform,
            ObservationLayout::default_experiment(),
        );
        (model, PriorSpec::uniform(vec![[0.0, 1.0]]))
    }

    #[test]
    fn zero_parameter_matches_constant_field_solve() {
        let (model, prior) = setup(4);
        let z = prior.parameter(vec![0.0]).unwrap();
        let k = CoefficientField::constant(model.mesh(), 2.0).unwrap();
        let u = assemble_and_solve(model.mesh(), &k, &experiment_source, BoundarySpec::default())
            .unwrap();
        let expected = observe(&u, model.layout()).unwrap();
        assert_eq!(model.evaluate(&z).unwrap(), expected);
        assert_eq!(model.evaluate(&z).unwrap(), model.evaluate(&z).unwrap());
    }

    #[test]
    fn zero_noise_reproduces_model_output() {
        let (model, prior) = setup(3);
        let z = prior.parameter(vec![0.3]).unwrap();
        let obs =
            generate_observations(&model, model.layout(), &z, 1e-3, 1, Noise::None).unwrap();
        assert_eq!(obs.delta, model.evaluate(&z).unwrap());
        assert_eq!(obs.len(), 36);
        assert_eq!(potential(&model, &z, &obs).unwrap(), 0.0);
    }

    #[test]
    fn noisy_observations_are_seeded() {
        let (model, prior) = setup(3);
        let z = prior.parameter(vec![0.3]).unwrap();
        let a = generate_observations(&model, model.layout(), &z, 1e-3, 5, Noise::Gaussian).unwrap();
        let b = generate_observations(&model, model.layout(), &z, 1e-3, 5, Noise::Gaussian).unwrap();
        assert_eq!(a, b);
        assert!(potential(&model, &z, &a).unwrap() > 0.0);
        assert!(generate_observations(&model, model.layout(), &z, 0.0, 5, Noise::Gaussian).is_err());
    }

    #[test]
    fn misfit_arithmetic() {
        let obs = ObservationSet {
            sigma2: 0.001,
            layout: ObservationLayout::lattice(1),
            delta: vec![0.0],
            truth_z: vec![],
            seed: 0,
        };
        let g = [0.002f64.sqrt()];
        assert!((obs.misfit(&g).unwrap() - 1.0).abs() < 1e-12);
        let doubled = ObservationSet {
            sigma2: 0.002,
            ..obs.clone()
        };
        assert!((doubled.misfit(&g).unwrap() - 0.5).abs() < 1e-12);
        assert!(obs.misfit(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn observation_json_schema() {
        let obs = ObservationSet {
            sigma2: 0.001,
            layout: ObservationLayout::lattice(1),
            delta: vec![0.25],
            truth_z: vec![0.4],
            seed: 9,
        };
        let v: serde_json::Value = serde_json::to_value(&obs).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 5);
        assert_eq!(v["layout"], serde_json::json!([[0.5, 0.5]]));
        let back: ObservationSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn potential_is_continuous_in_z() {
        let (model, prior) = setup(3);
        let z = prior.parameter(vec![0.4]).unwrap();
        let obs = generate_observations(&model, model.layout(), &z, 1e-3, 2, Noise::Gaussian).unwrap();
        let phi = |v: f64| potential(&model, &prior.parameter(vec![v]).unwrap(), &obs).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=5 {
            let h = 10f64.powi(-k);
            let gap = (phi(0.5 + h) - phi(0.5)).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-3);
    }
}
