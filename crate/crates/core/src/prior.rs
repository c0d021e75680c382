//! Priors on the parameter `z` and the coefficient fields built from it.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::{CoefficientField, Mesh};
use crate::rng::{rng_from_seed, Rng};

/// Prior specification as it appears in experiment configs.
///
/// `{"type":"uniform","bounds":[[0,1]]}` or
/// `{"type":"gaussian","n":4,"field":{"k_star":0,"k_bar":0,"psi":"sin-decay"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform { bounds: Vec<[f64; 2]> },
    Gaussian { n: usize, field: GaussianFieldConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianFieldConfig {
    pub k_star: f64,
    pub k_bar: f64,
    pub psi: PsiFamily,
}

/// Closed-form basis families for the log-normal coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsiFamily {
    /// `psi_j(x) = (0.5 / j^2) sin(j pi x1) sin(j pi x2)`, `j = 1..n`.
    #[serde(rename = "sin-decay")]
    SinDecay,
}

impl PsiFamily {
    /// `psi_j(x)` for 1-based `j`.
    pub fn eval(self, j: usize, x: [f64; 2]) -> f64 {
        match self {
            Self::SinDecay => {
                let jf = j as f64;
                0.5 / (jf * jf) * (jf * PI * x[0]).sin() * (jf * PI * x[1]).sin()
            }
        }
    }

    /// `sup |psi_j|`.
    pub fn sup_norm(self, j: usize) -> f64 {
        match self {
            Self::SinDecay => 0.5 / (j * j) as f64,
        }
    }
}

/// `K(z) = k_star + exp(k_bar + sum_j z_j psi_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFieldSpec {
    pub k_star: f64,
    pub k_bar: f64,
    pub psi: PsiFamily,
    pub n: usize,
    /// `b_j = sup |psi_j|`; finite `n` makes this summable.
    pub b: Vec<f64>,
}

impl GaussianFieldSpec {
    pub fn new(n: usize, config: &GaussianFieldConfig) -> Result<Self> {
        if n == 0 {
            return Err(invalid("gaussian prior needs n >= 1"));
        }
        if config.k_star < 0.0 {
            return Err(invalid("k_star must be non-negative"));
        }
        Ok(Self {
            k_star: config.k_star,
            k_bar: config.k_bar,
            psi: config.psi,
            n,
            b: (1..=n).map(|j| config.psi.sup_norm(j)).collect(),
        })
    }

    /// The test and experiment default: `n = 4`, sin-decay basis, `K* = K_bar = 0`.
    pub fn default_sin_decay() -> Self {
        Self::new(
            4,
            &GaussianFieldConfig {
                k_star: 0.0,
                k_bar: 0.0,
                psi: PsiFamily::SinDecay,
            },
        )
        .expect("valid default")
    }

    pub fn eval(&self, z: &[f64], x: [f64; 2]) -> f64 {
        let s: f64 = z
            .iter()
            .enumerate()
            .map(|(j, zj)| zj * self.psi.eval(j + 1, x))
            .sum();
        self.k_star + (self.k_bar + s).exp()
    }
}

/// Where a parameter vector lives.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    UniformBox(Arc<[[f64; 2]]>),
    GaussianIid,
}

/// The unknown `z` together with its prior domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    domain: Domain,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, domain: Domain) -> Result<Self> {
        if let Domain::UniformBox(bounds) = &domain {
            if bounds.len() != values.len() {
                return Err(Error::DimensionMismatch {
                    expected: bounds.len(),
                    got: values.len(),
                });
            }
            for (index, (&value, &[lo, hi])) in values.iter().zip(bounds.iter()).enumerate() {
                if !(lo..=hi).contains(&value) {
                    return Err(Error::OutsideDomain {
                        index,
                        value,
                        lo,
                        hi,
                    });
                }
            }
        }
        Ok(Self { values, domain })
    }

    /// Same domain, new coordinates (used by proposals that preserve the domain).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.domain.clone())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl PriorSpec {
    pub fn uniform(bounds: Vec<[f64; 2]>) -> Self {
        Self::Uniform { bounds }
    }

    pub fn gaussian_sin_decay(n: usize) -> Self {
        Self::Gaussian {
            n,
            field: GaussianFieldConfig {
                k_star: 0.0,
                k_bar: 0.0,
                psi: PsiFamily::SinDecay,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Uniform { bounds } => {
                if bounds.is_empty() {
                    return Err(invalid("uniform prior needs at least one coordinate"));
                }
                for b in bounds {
                    if !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite() {
                        return Err(invalid(format!("bad uniform bounds {b:?}")));
                    }
                }
                Ok(())
            }
            Self::Gaussian { n, field } => GaussianFieldSpec::new(*n, field).map(|_| ()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Uniform { bounds } => bounds.len(),
            Self::Gaussian { n, .. } => *n,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Self::Uniform { bounds } => Domain::UniformBox(bounds.clone().into()),
            Self::Gaussian { .. } => Domain::GaussianIid,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Self::Uniform { .. })
    }

    /// Wraps raw coordinates with this prior's domain.
    pub fn parameter(&self, values: Vec<f64>) -> Result<ParameterVector> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: values.len(),
            });
        }
        ParameterVector::new(values, self.domain())
    }

    /// One draw, advancing `rng`.
    pub fn draw(&self, rng: &mut Rng) -> ParameterVector {
        let values = match self {
            Self::Uniform { bounds } => bounds
                .iter()
                .map(|&[lo, hi]| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
            Self::Gaussian { n, .. } => (0..*n).map(|_| rng.sample(StandardNormal)).collect(),
        };
        ParameterVector {
            values,
            domain: self.domain(),
        }
    }
}

/// `count` i.i.d. prior draws from a ChaCha8 stream seeded with `seed`.
pub fn sample_prior(spec: &PriorSpec, seed: u64, count: usize) -> Result<Vec<ParameterVector>> {
    spec.validate()?;
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..count).map(|_| spec.draw(&mut rng)).collect())
}

/// `K(x) = z cos(2 pi x1) sin(2 pi x2) + 2` for a scalar `z`.
pub fn uniform_field_value(z: f64, x: [f64; 2]) -> f64 {
    z * (TAU * x[0]).cos() * (TAU * x[1]).sin() + 2.0
}

pub fn build_field_uniform(z: &ParameterVector, mesh: &Mesh) -> Result<CoefficientField> {
    if z.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: z.dim(),
        });
    }
    let zv = z.values()[0];
    if !matches!(z.domain(), Domain::UniformBox(_)) {
        return Err(invalid("uniform coefficient field expects a uniform-box parameter"));
    }
    // |cos sin| <= 1, so |z| < 2 keeps the field elliptic.
    if zv.abs() >= 2.0 {
        return Err(Error::OutsideDomain {
            index: 0,
            value: zv,
            lo: -2.0,
            hi: 2.0,
        });
    }
    CoefficientField::from_fn(
        mesh,
        |x| uniform_field_value(zv, x),
        format!("z cos(2 pi x1) sin(2 pi x2) + 2, z = {zv}"),
    )
}

pub fn build_field_lognormal(
    z: &ParameterVector,
    spec: &GaussianFieldSpec,
    mesh: &Mesh,
) -> Result<CoefficientField> {
    if z.dim() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: z.dim(),
        });
    }
    CoefficientField::from_fn(
        mesh,
        |x| spec.eval(z.values(), x),
        format!("K* + exp(K_bar + sum z_j psi_j), n = {}", spec.n),
    )
}

/// Parameter-to-coefficient map used by a forward model.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldBuilder {
    Uniform,
    LogNormal(GaussianFieldSpec),
}

impl FieldBuilder {
    pub fn for_prior(prior: &PriorSpec) -> Result<Self> {
        prior.validate()?;
        Ok(match prior {
            PriorSpec::Uniform { .. } => Self::Uniform,
            PriorSpec::Gaussian { n, field } => Self::LogNormal(GaussianFieldSpec::new(*n, field)?),
        })
    }

    pub fn build(&self, z: &ParameterVector, mesh: &Mesh) -> Result<CoefficientField> {
        match self {
            Self::Uniform => build_field_uniform(z, mesh),
            Self::LogNormal(spec) => build_field_lognormal(z, spec, mesh),
        }
    }

    /// Coefficient at an arbitrary point.
    pub fn value_at(&self, z: &ParameterVector, x: [f64; 2]) -> f64 {
        match self {
            Self::Uniform => uniform_field_value(z.values()[0], x),
            Self::LogNormal(spec) => spec.eval(z.values(), x),
        }
    }
}
