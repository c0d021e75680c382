use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::{FemSolution, MeshLevel, ObservationLayout};
use crate::model::{CostClass, ForwardModel, NumericalForward};
use crate::prior::{ParameterVector, PriorSpec};
use crate::rng::{derive_seed, rng_from_seed};

/// What the surrogate learns to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpace {
    /// The observation vector `G(z)`.
    #[default]
    Observations,
    /// All nodal values of the level-`L` solution.
    Field,
}

/// Nodal solution as a forward map, for field-space datasets.
#[derive(Debug, Clone)]
pub struct FieldForward(pub NumericalForward);

impl ForwardModel for FieldForward {
    fn evaluate(&self, z: &ParameterVector) -> Result<Vec<f64>> {
        Ok(self.0.solve(z)?.into_values())
    }

    fn cost_class(&self) -> CostClass {
        CostClass::Numerical
    }

    fn output_dim(&self) -> usize {
        self.0.level().node_count()
    }
}

/// Observes a predicted nodal field at `layout`.
pub fn observe_field(level: MeshLevel, values: Vec<f64>, layout: &ObservationLayout) -> Result<Vec<f64>> {
    crate::fem::observe(&FemSolution::new(level, values)?, layout)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.5,
            validation: 0.25,
            test: 0.25,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("split fractions must be in [0, 1] and sum to 1, got {parts:?}")));
        }
        if self.train == 0.0 {
            return Err(invalid("training fraction must be positive"));
        }
        Ok(())
    }

    /// Record counts; test takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64 * self.train).round() as usize).clamp(1, n);
        let val = ((n as f64 * self.validation).round() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn shuffled(n: usize, fracs: &SplitFractions, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng_from_seed(seed));
        let (a, b, _) = fracs.counts(n);
        let mut train = idx[..a].to_vec();
        let mut validation = idx[a..a + b].to_vec();
        let mut test = idx[a + b..].to_vec();
        train.sort_unstable();
        validation.sort_unstable();
        test.sort_unstable();
        Self {
            train,
            validation,
            test,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.validation).chain(&self.test) {
            if i >= n || seen[i] {
                return Err(Error::Format(format!("split index {i} repeated or out of range")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("split does not cover every record".into()));
        }
        Ok(())
    }
}

/// Inputs `z` drawn from the prior and targets from the numerical model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub split: Split,
    pub gen_seed: u64,
    pub target_space: TargetSpace,
    pub fractions: SplitFractions,
}

/// JSON sidecar of the dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub count: usize,
    pub n_inputs: usize,
    pub n_targets: usize,
    pub gen_seed: u64,
    pub split_seed: u64,
    pub target_space: TargetSpace,
    pub fractions: SplitFractions,
    pub split: Split,
}

pub const MIN_DATASET: usize = 10;

/// Draws `count` prior samples with `seed` and evaluates `model` at each in
/// parallel. The split is shuffled with a seed derived from `seed`.
pub fn generate_dataset(
    model: &dyn ForwardModel,
    target_space: TargetSpace,
    prior: &PriorSpec,
    count: usize,
    fracs: SplitFractions,
    seed: u64,
) -> Result<Dataset> {
    if count < MIN_DATASET {
        return Err(invalid(format!("dataset needs at least {MIN_DATASET} records, got {count}")));
    }
    fracs.validate()?;
    let mut rng = rng_from_seed(seed);
    let zs: Vec<ParameterVector> = (0..count).map(|_| prior.draw(&mut rng)).collect();
    let targets = zs
        .par_iter()
        .map(|z| model.evaluate(z))
        .collect::<Result<Vec<_>>>()?;
    if targets.iter().flatten().any(|t| !t.is_finite()) {
        return Err(invalid("non-finite dataset target"));
    }
    Ok(Dataset {
        inputs: zs.into_iter().map(|z| z.values().to_vec()).collect(),
        targets,
        split: Split::shuffled(count, &fracs, derive_seed(seed, 1)),
        gen_seed: seed,
        target_space,
        fractions: fracs,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn n_targets(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> (Vec<&[f64]>, Vec<&[f64]>) {
        (
            idx.iter().map(|&i| self.inputs[i].as_slice()).collect(),
            idx.iter().map(|&i| self.targets[i].as_slice()).collect(),
        )
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            count: self.len(),
            n_inputs: self.n_inputs(),
            n_targets: self.n_targets(),
            gen_seed: self.gen_seed,
            split_seed: derive_seed(self.gen_seed, 1),
            target_space: self.target_space,
            fractions: self.fractions,
            split: self.split.clone(),
        }
    }

    /// CSV `z_1..z_n,t_1..t_k`.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let mut header: Vec<String> = (1..=self.n_inputs()).map(|j| format!("z_{j}")).collect();
        header.extend((1..=self.n_targets()).map(|j| format!("t_{j}")));
        writeln!(out, "{}", header.join(","))?;
        for (z, t) in self.inputs.iter().zip(&self.targets) {
            let row: Vec<String> = z.iter().chain(t).map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_files(&self, csv: &Path, sidecar: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        std::fs::write(sidecar, serde_json::to_vec_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn read_files(csv: &Path, sidecar: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(sidecar)?)?;
        let mut lines = BufReader::new(std::fs::File::open(csv)?).lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))??;
        let cols = header.split(',').count();
        if cols != meta.n_inputs + meta.n_targets {
            return Err(Error::Format(format!(
                "dataset header has {cols} columns, sidecar says {}",
                meta.n_inputs + meta.n_targets
            )));
        }
        let (mut inputs, mut targets) = (Vec::new(), Vec::new());
        for line in lines {
            let row = line?
                .split(',')
                .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != cols {
                return Err(Error::Format(format!("dataset row has {} fields, expected {cols}", row.len())));
            }
            inputs.push(row[..meta.n_inputs].to_vec());
            targets.push(row[meta.n_inputs..].to_vec());
        }
        if inputs.len() != meta.count {
            return Err(Error::Format(format!(
                "dataset has {} rows, sidecar says {}",
                inputs.len(),
                meta.count
            )));
        }
        meta.split.check(meta.count)?;
        Ok(Self {
            inputs,
            targets,
            split: meta.split,
            gen_seed: meta.gen_seed,
            target_space: meta.target_space,
            fractions: meta.fractions,
        })
    }
}
