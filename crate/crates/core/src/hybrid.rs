//! Two-level estimators: a long surrogate chain corrected by short
//! numerical-solver chains, plus sample-budget selection.
//!
//! Notation: `delta = phi_num - phi_ml`. Under a uniform prior the weights
//! `exp(delta)` stay bounded on the box. Under a Gaussian prior the correction
//! is split by the switching indicator `I = [delta <= 0]` into six terms
//! `A1..A6`, each of whose exponential factors has a non-positive argument.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampler::Chain;
use crate::stats::{batch_means_se, DEFAULT_BATCHES};

/// `1` when `phi_num <= phi_ml`, else `0`.
pub fn switching_indicator(phi_num: f64, phi_ml: f64) -> u8 {
    u8::from(phi_num - phi_ml <= 0.0)
}

/// The six branch terms at one sample with scalar QoI value `q`.
///
/// `[A1, A2, A3, A4, A5, A6]` with
/// `A1 = (1 - e^d) Q I`, `A2 = (e^-d - 1) Q (1-I)`, `A3 = Q I`,
/// `A4 = Q (1-I)`, `A5 = (e^d - 1) I`, `A6 = (1 - e^-d)(1-I)`.
pub fn a_terms(phi_num: f64, phi_ml: f64, q: f64) -> [f64; 6] {
    let d = phi_num - phi_ml;
    if switching_indicator(phi_num, phi_ml) == 1 {
        let w = d.exp() - 1.0;
        [-w * q, 0.0, q, 0.0, w, 0.0]
    } else {
        let w = (-d).exp() - 1.0;
        [0.0, w * q, 0.0, q, 0.0, -w]
    }
}

/// Both potentials and the QoI at one chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentialSample {
    pub phi_num: f64,
    pub phi_ml: f64,
    pub q: Vec<f64>,
}

impl DualPotentialSample {
    pub fn delta(&self) -> f64 {
        self.phi_num - self.phi_ml
    }

    /// Samples of a chain that targeted the numerical potential and carried
    /// the surrogate potential as companion.
    pub fn from_num_chain(chain: &Chain) -> Result<Vec<Self>> {
        Self::from_chain(chain, true)
    }

    /// Samples of a surrogate-targeted chain with the numerical potential as
    /// companion.
    pub fn from_ml_chain(chain: &Chain) -> Result<Vec<Self>> {
        Self::from_chain(chain, false)
    }

    fn from_chain(chain: &Chain, target_is_num: bool) -> Result<Vec<Self>> {
        let comp = chain
            .companion
            .as_ref()
            .ok_or_else(|| invalid("chain has no companion potential"))?;
        let out: Vec<Self> = chain
            .potentials
            .iter()
            .zip(comp)
            .zip(&chain.qoi)
            .map(|((&t, &c), q)| {
                let (phi_num, phi_ml) = if target_is_num { (t, c) } else { (c, t) };
                Self {
                    phi_num,
                    phi_ml,
                    q: q.clone(),
                }
            })
            .collect();
        if out.iter().any(|s| !s.phi_num.is_finite() || !s.phi_ml.is_finite()) {
            return Err(invalid("non-finite potential in dual chain"));
        }
        Ok(out)
    }
}

/// How the Gaussian-prior correction terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianForm {
    /// `A1 + A5*A3 + A2 + A6*A4 + E_ml[Q]`. Biased when the indicator switches
    /// inside the posterior mass.
    #[default]
    ProductOfMeans,
    /// `A1 + (A2 + E_ml[Q]) (1 + A5) / (1 - A6)`, which uses the normalizing
    /// constant ratio implied by the same six terms.
    RatioConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "prior", rename_all = "snake_case")]
pub enum EstimatorKind {
    Uniform,
    Gaussian { form: GaussianForm },
}

/// Means of `A1..A6`. `A1`, `A4`, `A5` come from the numerical chain,
/// `A2`, `A3`, `A6` from the short surrogate chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ATermMeans {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub a3: Vec<f64>,
    pub a4: Vec<f64>,
    pub a5: f64,
    pub a6: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub base_ml_mean: Vec<f64>,
    pub term_weighted: Option<Vec<f64>>,
    pub term_ratio: Option<f64>,
    pub a_terms: Option<ATermMeans>,
    /// Standard error of `total`, propagated through the estimator.
    pub combined: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridEstimate {
    pub kind: EstimatorKind,
    pub total: Vec<f64>,
    pub base_ml_mean: Vec<f64>,
    /// Uniform case: mean of `(1 - e^d) Q` over the numerical chain.
    pub term_weighted: Option<Vec<f64>>,
    /// Uniform case: mean of `e^d - 1` over the numerical chain.
    pub term_ratio: Option<f64>,
    pub a_terms: Option<ATermMeans>,
    pub standard_errors: StandardErrors,
    pub m_ml: usize,
    pub m_num: usize,
    /// Samples carrying a numerical potential (numerical chain plus short
    /// surrogate chain).
    pub numerical_samples: usize,
}

pub fn assemble_uniform(term_weighted: f64, term_ratio: f64, base_ml_mean: f64) -> f64 {
    term_weighted + term_ratio * base_ml_mean + base_ml_mean
}

/// Scalar assembly of the Gaussian estimator from term means.
pub fn assemble_gaussian(form: GaussianForm, a: [f64; 6], base_ml_mean: f64) -> f64 {
    let [a1, a2, a3, a4, a5, a6] = a;
    match form {
        GaussianForm::ProductOfMeans => a1 + a5 * a3 + a2 + a6 * a4 + base_ml_mean,
        GaussianForm::RatioConsistent => a1 + (a2 + base_ml_mean) * (1.0 + a5) / (1.0 - a6),
    }
}

fn check_dims(q: &[Vec<f64>]) -> Result<usize> {
    let dim = q.first().ok_or(Error::Empty)?.len();
    if let Some(bad) = q.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(dim)
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

fn se(xs: &[f64]) -> f64 {
    batch_means_se(xs, DEFAULT_BATCHES)
}

fn column(q: &[Vec<f64>], c: usize) -> Vec<f64> {
    q.iter().map(|v| v[c]).collect()
}

/// Uniform-prior estimator.
///
/// `num` holds the states of the numerically targeted chain, `ml_q` the QoI
/// values of the surrogate chain.
pub fn hybrid_estimate_uniform(num: &[DualPotentialSample], ml_q: &[Vec<f64>]) -> Result<HybridEstimate> {
    if num.is_empty() {
        return Err(Error::Empty);
    }
    let dim = check_dims(ml_q)?;
    let num_q: Vec<Vec<f64>> = num.iter().map(|s| s.q.clone()).collect();
    if check_dims(&num_q)? != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: num_q[0].len(),
        });
    }

    let ratio: Vec<f64> = num.iter().map(|s| s.delta().exp() - 1.0).collect();
    let term_ratio = mean(ratio.iter().copied());
    let mut total = Vec::with_capacity(dim);
    let mut base = Vec::with_capacity(dim);
    let mut weighted = Vec::with_capacity(dim);
    let (mut se_base, mut se_weighted, mut combined) = (vec![], vec![], vec![]);
    for c in 0..dim {
        let qml = column(ml_q, c);
        let b = mean(qml.iter().copied());
        let w_series: Vec<f64> = num.iter().zip(&ratio).map(|(s, r)| -r * s.q[c]).collect();
        let w = mean(w_series.iter().copied());
        total.push(assemble_uniform(w, term_ratio, b));
        base.push(b);
        weighted.push(w);

        let g: Vec<f64> = w_series.iter().zip(&ratio).map(|(w, r)| w + r * b).collect();
        let sb = se(&qml);
        se_base.push(sb);
        se_weighted.push(se(&w_series));
        combined.push((se(&g).powi(2) + ((1.0 + term_ratio) * sb).powi(2)).sqrt());
    }
    Ok(HybridEstimate {
        kind: EstimatorKind::Uniform,
        total,
        base_ml_mean: base.clone(),
        term_weighted: Some(weighted),
        term_ratio: Some(term_ratio),
        a_terms: None,
        standard_errors: StandardErrors {
            base_ml_mean: se_base,
            term_weighted: Some(se_weighted),
            term_ratio: Some(se(&ratio)),
            a_terms: None,
            combined,
        },
        m_ml: ml_q.len(),
        m_num: num.len(),
        numerical_samples: num.len(),
    })
}

/// Gaussian-prior estimator.
///
/// `num`: numerically targeted chain with the surrogate potential as
/// companion. `ml_short`: surrogate-targeted chain with the numerical
/// potential as companion. `ml_long_q`: QoI values of the long surrogate
/// chain.
pub fn hybrid_estimate_gaussian(
    num: &[DualPotentialSample],
    ml_short: &[DualPotentialSample],
    ml_long_q: &[Vec<f64>],
    form: GaussianForm,
) -> Result<HybridEstimate> {
    if num.is_empty() || ml_short.is_empty() {
        return Err(Error::Empty);
    }
    let dim = check_dims(ml_long_q)?;
    for s in num.iter().chain(ml_short) {
        if s.q.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.q.len(),
            });
        }
    }

    let terms = |set: &[DualPotentialSample], c: usize| -> Vec<[f64; 6]> {
        set.iter().map(|s| a_terms(s.phi_num, s.phi_ml, s.q[c])).collect()
    };
    let pick = |t: &[[f64; 6]], k: usize| -> Vec<f64> { t.iter().map(|a| a[k]).collect() };

    // A5 and A6 do not depend on Q; component 0 gives them.
    let a5_s = pick(&terms(num, 0), 4);
    let a6_s = pick(&terms(ml_short, 0), 5);
    let a5 = mean(a5_s.iter().copied());
    let a6 = mean(a6_s.iter().copied());

    let mut m = ATermMeans {
        a1: vec![],
        a2: vec![],
        a3: vec![],
        a4: vec![],
        a5,
        a6,
    };
    let mut s = ATermMeans {
        a1: vec![],
        a2: vec![],
        a3: vec![],
        a4: vec![],
        a5: se(&a5_s),
        a6: se(&a6_s),
    };
    let (mut total, mut base, mut se_base, mut combined) = (vec![], vec![], vec![], vec![]);
    for c in 0..dim {
        let tn = terms(num, c);
        let tm = terms(ml_short, c);
        let (a1_s, a4_s) = (pick(&tn, 0), pick(&tn, 3));
        let (a2_s, a3_s) = (pick(&tm, 1), pick(&tm, 2));
        let a1 = mean(a1_s.iter().copied());
        let a2 = mean(a2_s.iter().copied());
        let a3 = mean(a3_s.iter().copied());
        let a4 = mean(a4_s.iter().copied());
        let ql = column(ml_long_q, c);
        let q = mean(ql.iter().copied());
        let sq = se(&ql);

        total.push(assemble_gaussian(form, [a1, a2, a3, a4, a5, a6], q));
        // first-order error propagation, one linearized series per chain
        let (g, h, dq): (Vec<f64>, Vec<f64>, f64) = match form {
            GaussianForm::ProductOfMeans => (
                (0..num.len()).map(|i| a1_s[i] + a3 * a5_s[i] + a6 * a4_s[i]).collect(),
                (0..ml_short.len()).map(|i| a2_s[i] + a5 * a3_s[i] + a4 * a6_s[i]).collect(),
                1.0,
            ),
            GaussianForm::RatioConsistent => {
                let r = (1.0 + a5) / (1.0 - a6);
                let lead = a2 + q;
                (
                    (0..num.len()).map(|i| a1_s[i] + lead / (1.0 - a6) * a5_s[i]).collect(),
                    (0..ml_short.len())
                        .map(|i| r * a2_s[i] + lead * r / (1.0 - a6) * a6_s[i])
                        .collect(),
                    r,
                )
            }
        };
        combined.push((se(&g).powi(2) + se(&h).powi(2) + (dq * sq).powi(2)).sqrt());

        m.a1.push(a1);
        m.a2.push(a2);
        m.a3.push(a3);
        m.a4.push(a4);
        s.a1.push(se(&a1_s));
        s.a2.push(se(&a2_s));
        s.a3.push(se(&a3_s));
        s.a4.push(se(&a4_s));
        base.push(q);
        se_base.push(sq);
    }
    Ok(HybridEstimate {
        kind: EstimatorKind::Gaussian { form },
        total,
        base_ml_mean: base,
        term_weighted: None,
        term_ratio: None,
        a_terms: Some(m),
        standard_errors: StandardErrors {
            base_ml_mean: se_base,
            term_weighted: None,
            term_ratio: None,
            a_terms: Some(s),
            combined,
        },
        m_ml: ml_long_q.len(),
        m_num: num.len(),
        numerical_samples: num.len() + ml_short.len(),
    })
}

/// Per-sample audit dump: `chain,index,phi_num,phi_ml,indicator,a5,a6`
/// followed by `a1_c,a2_c,a3_c,a4_c` for every QoI component `c`.
pub fn write_a_terms_csv(
    out: &mut impl Write,
    sets: &[(&str, &[DualPotentialSample])],
) -> Result<()> {
    let dim = sets
        .iter()
        .find_map(|(_, s)| s.first())
        .map_or(0, |s| s.q.len());
    let mut header = "chain,index,phi_num,phi_ml,indicator,a5,a6".to_string();
    for c in 1..=dim {
        header.push_str(&format!(",a1_{c},a2_{c},a3_{c},a4_{c}"));
    }
    writeln!(out, "{header}")?;
    for (name, samples) in sets {
        for (i, s) in samples.iter().enumerate() {
            let base = a_terms(s.phi_num, s.phi_ml, 1.0);
            write!(
                out,
                "{name},{i},{:?},{:?},{},{:?},{:?}",
                s.phi_num,
                s.phi_ml,
                switching_indicator(s.phi_num, s.phi_ml),
                base[4],
                base[5]
            )?;
            for &q in &s.q {
                let a = a_terms(s.phi_num, s.phi_ml, q);
                write!(out, ",{:?},{:?},{:?},{:?}", a[0], a[1], a[2], a[3])?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Chain lengths `m_ml = round(C 4^L)`, `m_num = round(C (1 + 2^eps)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBudget {
    pub level: u32,
    pub epsilon: f64,
    pub c: f64,
    pub m_ml: usize,
    pub m_num: usize,
}

pub fn select_budget(level: u32, epsilon: f64, c: f64) -> Result<SampleBudget> {
    if level == 0 {
        return Err(invalid("budget level must be at least 1"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid(format!("budget constant C must be positive, got {c}")));
    }
    if !epsilon.is_finite() {
        return Err(invalid("epsilon must be finite"));
    }
    let count = |x: f64| -> Result<usize> {
        let r = x.round();
        if !(r < usize::MAX as f64) {
            return Err(invalid(format!("sample count {x} too large")));
        }
        Ok((r as usize).max(1))
    };
    Ok(SampleBudget {
        level,
        epsilon,
        c,
        m_ml: count(c * 4f64.powi(level as i32))?,
        m_num: count(c * (1.0 + epsilon.exp2()).powi(2))?,
    })
}

/// The `C` for which the numerical chain gets `m_num` samples.
pub fn calibrate_c(epsilon: f64, m_num: usize) -> Result<f64> {
    if m_num == 0 || !epsilon.is_finite() {
        return Err(invalid("calibration needs m_num >= 1 and finite epsilon"));
    }
    Ok(m_num as f64 / (1.0 + epsilon.exp2()).powi(2))
}
