//! Series statistics shared by the samplers and the estimators.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{invalid, Error, Result};

/// Batch count used for Monte Carlo standard errors.
pub const DEFAULT_BATCHES: usize = 20;

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Standard error of the mean from non-overlapping batch means.
///
/// Uses `min(batches, len)` equal batches; trailing samples that do not fill
/// a batch are dropped from the variance (not from the mean itself). Returns
/// NaN for fewer than two samples.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let b = batches.min(xs.len());
    if b < 2 {
        return f64::NAN;
    }
    let size = xs.len() / b;
    let means: Vec<f64> = xs
        .chunks_exact(size)
        .take(b)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Autocovariance at every lag (biased, divided by `n`), via FFT.
pub fn autocovariance(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let m = xs.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = xs
        .iter()
        .map(|x| Complex::new(x - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf.iter().take(n).map(|c| c.re / (size * n) as f64).collect()
}

/// Effective sample size with Geyer's initial positive sequence.
///
/// Autocorrelations are summed in adjacent pairs `rho_2k + rho_2k+1` until
/// a pair turns non-positive. The result is clamped to `[1, n]`. A constant
/// series has no autocorrelation structure and is assigned `n` by convention.
pub fn effective_sample_size(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 10 {
        return Err(invalid(format!("ESS needs at least 10 samples, got {n}")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(invalid("ESS of a non-finite series"));
    }
    let acov = autocovariance(xs);
    if acov[0] <= 0.0 {
        return Ok(n as f64);
    }
    let rho = |k: usize| acov[k] / acov[0];
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    let tau = -1.0 + 2.0 * sum;
    let ess = if tau > 0.0 { n as f64 / tau } else { n as f64 };
    Ok(ess.clamp(1.0, n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn fft_autocovariance_matches_direct() {
        let xs: Vec<f64> = (0..57).map(|k| (k as f64 * 0.7).sin() + 0.1 * k as f64).collect();
        let acov = autocovariance(&xs);
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        for lag in [0, 1, 5, 30] {
            let direct: f64 = (0..xs.len() - lag)
                .map(|t| (xs[t] - m) * (xs[t + lag] - m))
                .sum::<f64>()
                / xs.len() as f64;
            assert!((acov[lag] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_series_has_full_ess() {
        let mut rng = rng_from_seed(21);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let ess = effective_sample_size(&xs).unwrap();
        assert!((8_000.0..=12_000.0).contains(&ess), "{ess}");
    }

    #[test]
    fn ar1_series_has_reduced_ess() {
        let mut rng = rng_from_seed(4);
        let phi: f64 = 0.9;
        let mut x = 0.0;
        let xs: Vec<f64> = (0..50_000)
            .map(|_| {
                x = phi * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let ess = effective_sample_size(&xs).unwrap();
        let expected = 50_000.0 * (1.0 - phi) / (1.0 + phi);
        assert!((ess / expected - 1.0).abs() < 0.25, "{ess} vs {expected}");
    }

    #[test]
    fn periodic_and_constant_guards() {
        let alt: Vec<f64> = (0..100).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let ess = effective_sample_size(&alt).unwrap();
        assert!(ess >= 1.0 && ess <= 100.0);
        assert_eq!(effective_sample_size(&[3.0; 40]).unwrap(), 40.0);
        assert!(effective_sample_size(&[1.0; 5]).is_err());
    }

    #[test]
    fn batch_means_on_iid() {
        let mut rng = rng_from_seed(8);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let se = batch_means_se(&xs, DEFAULT_BATCHES);
        let expected = 1.0 / (20_000f64).sqrt();
        assert!((se / expected - 1.0).abs() < 0.5, "{se}");
        assert!(batch_means_se(&[1.0], 20).is_nan());
        assert_eq!(batch_means_se(&[2.0; 100], 20), 0.0);
    }
}
