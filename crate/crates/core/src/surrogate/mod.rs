//! Neural-network surrogate of the parameter-to-observation map.

mod dataset;
mod mlp;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{
    generate_dataset, observe_field, Dataset, DatasetMeta, FieldForward, Split, SplitFractions, TargetSpace,
    MIN_DATASET,
};
pub use mlp::{
    test_metrics, train_mlp, AdamParams, Affine, Layer, MlpModel, TestMetrics, TrainConfig, TrainReport,
    FORMAT_VERSION, MAGIC,
};

use crate::error::{invalid, Error, Result};
use crate::fem::{l2_norm_difference, observe, MeshLevel, ObservationLayout};
use crate::model::{CostClass, ForwardModel, NumericalForward};
use crate::prior::{sample_prior, PriorSpec};

/// A trained network used as a forward model.
#[derive(Debug, Clone)]
pub struct SurrogateForward {
    model: MlpModel,
    target: SurrogateTarget,
}

#[derive(Debug, Clone)]
pub enum SurrogateTarget {
    Observations,
    /// Network predicts level-`level` nodal values, observed at `layout`.
    Field { level: MeshLevel, layout: ObservationLayout },
}

impl SurrogateForward {
    pub fn new(model: MlpModel, target: SurrogateTarget) -> Result<Self> {
        if let SurrogateTarget::Field { level, .. } = &target {
            if model.n_out() != level.node_count() {
                return Err(Error::DimensionMismatch {
                    expected: level.node_count(),
                    got: model.n_out(),
                });
            }
        }
        Ok(Self { model, target })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }
}

impl ForwardModel for SurrogateForward {
    fn evaluate(&self, z: &crate::prior::ParameterVector) -> Result<Vec<f64>> {
        let y = self.model.predict(z.values())?;
        match &self.target {
            SurrogateTarget::Observations => Ok(y),
            SurrogateTarget::Field { level, layout } => observe_field(*level, y, layout),
        }
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Surrogate
    }

    fn output_dim(&self) -> usize {
        match &self.target {
            SurrogateTarget::Observations => self.model.n_out(),
            SurrogateTarget::Field { layout, .. } => layout.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateErrorEstimate {
    pub err_ml: f64,
    pub err_num: f64,
    pub epsilon: f64,
}

/// `epsilon = log2(err_ml / err_num)`.
pub fn estimate_epsilon(err_ml: f64, err_num: f64) -> Result<SurrogateErrorEstimate> {
    if !(err_ml > 0.0 && err_num > 0.0) || !err_ml.is_finite() || !err_num.is_finite() {
        return Err(invalid(format!(
            "error estimates must be positive and finite, got {err_ml} and {err_num}"
        )));
    }
    Ok(SurrogateErrorEstimate {
        err_ml,
        err_num,
        epsilon: (err_ml / err_num).log2(),
    })
}

/// Default gap between the target level and the reference level.
pub const REFERENCE_OFFSET: u32 = 5;
pub const REFERENCE_DRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorMeasurement {
    pub reference_level: u32,
    pub draws: usize,
    pub seed: u64,
}

/// Mean errors of the surrogate and of the level-`L` solver against the
/// reference-level solver over prior draws.
///
/// Observation-space surrogates are compared by the Euclidean norm of the
/// observation vectors scaled by `1/sqrt(k)`. Field surrogates are compared in
/// the L2 norm of the domain, like the numerical error.
pub fn measure_errors(
    surrogate: &SurrogateForward,
    numerical: &NumericalForward,
    prior: &PriorSpec,
    m: &ErrorMeasurement,
) -> Result<SurrogateErrorEstimate> {
    let reference_level = MeshLevel::new(m.reference_level)?;
    if reference_level <= numerical.level() {
        return Err(invalid("reference level must be finer than the target level"));
    }
    if m.draws == 0 {
        return Err(invalid("error measurement needs at least one draw"));
    }
    let reference = numerical.at_level(reference_level);
    let zs = sample_prior(prior, m.seed, m.draws)?;
    let per_draw = zs
        .par_iter()
        .map(|z| -> Result<(f64, f64)> {
            let u_ref = reference.solve(z)?;
            let u_num = numerical.solve(z)?;
            let y = surrogate.model.predict(z.values())?;
            match &surrogate.target {
                SurrogateTarget::Observations => {
                    let t = observe(&u_ref, numerical.layout())?;
                    let g = observe(&u_num, numerical.layout())?;
                    Ok((rms(&y, &t), rms(&g, &t)))
                }
                SurrogateTarget::Field { level, .. } => {
                    let u_ml = crate::fem::FemSolution::new(*level, y)?;
                    Ok((l2_norm_difference(&u_ml, &u_ref)?, l2_norm_difference(&u_num, &u_ref)?))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_draw.len() as f64;
    let err_ml = per_draw.iter().map(|p| p.0).sum::<f64>() / n;
    let err_num = per_draw.iter().map(|p| p.1).sum::<f64>() / n;
    estimate_epsilon(err_ml, err_num)
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}
