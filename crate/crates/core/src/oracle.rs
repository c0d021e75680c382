//! Reference posterior expectations by Gauss-Legendre quadrature.
//!
//! Only for low-dimensional priors: a tensor grid on the uniform box, or on
//! `[-6, 6]^n` weighted by the standard normal density for Gaussian priors.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{Potential, Qoi};
use crate::prior::{ParameterVector, PriorSpec};

pub const MAX_POINTS: usize = 128;
pub const MAX_GRID_DIM: usize = 3;
/// Half-width of the truncated grid used for Gaussian priors.
pub const GAUSSIAN_TRUNCATION: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub domain: [f64; 2],
}

/// `n`-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if !(1..=MAX_POINTS).contains(&n) {
        return Err(invalid(format!("quadrature points must lie in 1..={MAX_POINTS}, got {n}")));
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!("bad interval [{a}, {b}]")));
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        // ascending order: the largest root goes last
        x[n - 1 - i] = t;
        x[i] = -t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(QuadratureRule {
        nodes: x.iter().map(|t| mid + half * t).collect(),
        weights: w.iter().map(|w| half * w).collect(),
        domain: [a, b],
    })
}

/// `n`-point rules on each panel between consecutive `breaks`, joined.
/// Placing a break where the integrand has a kink keeps spectral accuracy.
pub fn composite_gauss_legendre(n: usize, breaks: &[f64]) -> Result<QuadratureRule> {
    if breaks.len() < 2 {
        return Err(invalid("composite rule needs at least two break points"));
    }
    let mut nodes = Vec::with_capacity(n * (breaks.len() - 1));
    let mut weights = Vec::with_capacity(nodes.capacity());
    for w in breaks.windows(2) {
        let r = gauss_legendre(n, w[0], w[1])?;
        nodes.extend(r.nodes);
        weights.extend(r.weights);
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        domain: [breaks[0], breaks[breaks.len() - 1]],
    })
}

/// `(P_n(t), P_n'(t))` by the three-term recurrence.
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (t * p1 - p0) / (t * t - 1.0))
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, w)| w * f(x)).sum()
    }
}

/// Tensor-product nodes with prior-density weights.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub points: Vec<ParameterVector>,
    /// Quadrature weight times prior density.
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    /// `n` points per coordinate.
    pub fn for_prior(prior: &PriorSpec, n: usize) -> Result<Self> {
        prior.validate()?;
        let dim = prior.dim();
        if dim == 0 || dim > MAX_GRID_DIM {
            return Err(invalid(format!(
                "quadrature oracle supports 1..={MAX_GRID_DIM} parameters, got {dim}"
            )));
        }
        let axes: Vec<(QuadratureRule, Box<dyn Fn(f64) -> f64>)> = match prior {
            PriorSpec::Uniform { bounds } => bounds
                .iter()
                .map(|&[lo, hi]| {
                    let density = 1.0 / (hi - lo);
                    Ok((gauss_legendre(n, lo, hi)?, Box::new(move |_| density) as Box<dyn Fn(f64) -> f64>))
                })
                .collect::<Result<_>>()?,
            PriorSpec::Gaussian { .. } => (0..dim)
                .map(|_| {
                    Ok((
                        gauss_legendre(n, -GAUSSIAN_TRUNCATION, GAUSSIAN_TRUNCATION)?,
                        Box::new(|x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt())
                            as Box<dyn Fn(f64) -> f64>,
                    ))
                })
                .collect::<Result<_>>()?,
        };
        let total = n.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut z = Vec::with_capacity(dim);
            let mut w = 1.0;
            for (rule, density) in &axes {
                let k = rem % n;
                rem /= n;
                z.push(rule.nodes[k]);
                w *= rule.weights[k] * density(rule.nodes[k]);
            }
            points.push(prior.parameter(z)?);
            weights.push(w);
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Prior expectation of `f`.
    pub fn prior_mean(&self, f: impl Fn(&ParameterVector) -> f64) -> f64 {
        let total: f64 = self.weights.iter().sum();
        self.points.iter().zip(&self.weights).map(|(z, w)| w * f(z)).sum::<f64>() / total
    }

    /// Potential at every node, evaluated in parallel.
    pub fn potentials(&self, target: &dyn Potential) -> Result<Vec<f64>> {
        self.points.par_iter().map(|z| target.potential(z)).collect()
    }
}

/// `sum w_i exp(-phi_i) q_i / sum w_i exp(-phi_i)`, shifting `phi` by its
/// minimum first.
pub fn weighted_posterior_mean(phi: &[f64], weights: &[f64], q: &[Vec<f64>]) -> Result<Vec<f64>> {
    if phi.len() != weights.len() || phi.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: phi.len(),
            got: weights.len().min(q.len()),
        });
    }
    let dim = q.first().ok_or(Error::Empty)?.len();
    if phi.iter().any(|p| p.is_nan()) {
        return Err(invalid("NaN potential in quadrature"));
    }
    let shift = phi.iter().copied().fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return Err(invalid("all quadrature potentials are infinite"));
    }
    let mut num = vec![0.0; dim];
    let mut den = 0.0;
    for ((p, w), qi) in phi.iter().zip(weights).zip(q) {
        let r = w * (shift - p).exp();
        den += r;
        for (n, v) in num.iter_mut().zip(qi) {
            *n += r * v;
        }
    }
    Ok(num.into_iter().map(|n| n / den).collect())
}

/// Posterior expectation of `qoi` under `exp(-Phi) * prior` on an `n`-point
/// per-axis grid.
pub fn posterior_expectation_quadrature(
    target: &dyn Potential,
    prior: &PriorSpec,
    qoi: &dyn Qoi,
    n_points: usize,
) -> Result<Vec<f64>> {
    if n_points < 4 {
        return Err(invalid(format!("quadrature needs at least 4 points, got {n_points}")));
    }
    let grid = QuadratureGrid::for_prior(prior, n_points)?;
    let phi = grid.potentials(target)?;
    let q: Vec<Vec<f64>> = grid.points.iter().map(|z| qoi.evaluate(z)).collect();
    weighted_posterior_mean(&phi, &grid.weights, &q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FnPotential, ParameterQoi};

    #[test]
    fn small_rules_closed_form() {
        let r = gauss_legendre(2, -1.0, 1.0).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + s).abs() < 1e-15 && (r.nodes[1] - s).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15 && (r.weights[1] - 1.0).abs() < 1e-15);
        let r = gauss_legendre(1, 0.0, 1.0).unwrap();
        assert_eq!(r.nodes, vec![0.5]);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
        assert!(gauss_legendre(0, 0.0, 1.0).is_err());
        assert!(gauss_legendre(129, 0.0, 1.0).is_err());
    }

    #[test]
    fn exactness_and_weight_sums() {
        let r = gauss_legendre(4, 0.0, 1.0).unwrap();
        assert!((r.integrate(|x| x.powi(7)) - 0.125).abs() < 1e-14);
        for n in [3, 7, 32, 64, 128] {
            let r = gauss_legendre(n, -2.0, 3.0).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 5.0).abs() < 1e-12, "n={n}");
            assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
            assert!(r.nodes[0] > -2.0 && *r.nodes.last().unwrap() < 3.0);
            let exact = (3f64.powi(2 * n as i32) - 2f64.powi(2 * n as i32)) / (2 * n) as f64;
            let approx = r.integrate(|x| x.powi(2 * n as i32 - 1));
            assert!((approx / exact - 1.0).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn flat_and_shifted_potentials() {
        let prior = PriorSpec::uniform(vec![[0.0, 1.0]]);
        let q = ParameterQoi { dim: 1 };
        let flat = posterior_expectation_quadrature(&FnPotential(|_: &[f64]| 0.0), &prior, &q, 32).unwrap();
        assert!((flat[0] - 0.5).abs() < 1e-14);
        let a = FnPotential(|z: &[f64]| 40.0 * (z[0] - 0.3).powi(2));
        let b = FnPotential(|z: &[f64]| 40.0 * (z[0] - 0.3).powi(2) + 1234.5);
        let ea = posterior_expectation_quadrature(&a, &prior, &q, 32).unwrap()[0];
        let eb = posterior_expectation_quadrature(&b, &prior, &q, 32).unwrap()[0];
        assert!((ea - eb).abs() < 1e-13);
        let huge = FnPotential(|z: &[f64]| 1e6 + z[0]);
        assert!(posterior_expectation_quadrature(&huge, &prior, &q, 32).unwrap()[0].is_finite());
    }

    #[test]
    fn gaussian_grid_moments() {
        let prior = PriorSpec::gaussian_sin_decay(2);
        let grid = QuadratureGrid::for_prior(&prior, 64).unwrap();
        assert!((grid.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!((grid.prior_mean(|z| z.values()[1].powi(2)) - 1.0).abs() < 1e-7);
        assert!(QuadratureGrid::for_prior(&PriorSpec::gaussian_sin_decay(4), 8).is_err());
    }

    #[test]
    fn composite_rule_handles_kinks() {
        let r = composite_gauss_legendre(20, &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.len(), 40);
        assert!((r.integrate(f64::abs) - 1.0).abs() < 1e-14);
        assert!(composite_gauss_legendre(4, &[0.0]).is_err());
    }
}
