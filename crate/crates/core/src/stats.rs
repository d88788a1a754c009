//! Small statistics helpers.

use crate::error::{Error, Result};

/// Result of the D'Agostino–Pearson omnibus test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityTest {
    pub z_skew: f64,
    pub z_kurtosis: f64,
    /// K² = z_skew² + z_kurtosis², χ² with two degrees of freedom under H₀.
    pub statistic: f64,
    pub p_value: f64,
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// D'Agostino's transformed sample skewness.
fn skew_z(n: f64, b1: f64) -> f64 {
    let y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    delta * (y / alpha).asinh()
}

/// Anscombe–Glynn transformed sample kurtosis.
fn kurtosis_z(n: f64, b2: f64) -> f64 {
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0).powi(2) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

/// Omnibus normality test on skewness and kurtosis. Needs at least 20
/// samples. A constant sample is reported as not rejected (p = 1).
pub fn normality_test(x: &[f64]) -> Result<NormalityTest> {
    if x.len() < 20 {
        return Err(Error::invalid("normality test needs at least 20 samples"));
    }
    let (m2, m3, m4) = central_moments(x);
    if m2 == 0.0 {
        return Ok(NormalityTest {
            z_skew: 0.0,
            z_kurtosis: 0.0,
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let n = x.len() as f64;
    let z_skew = skew_z(n, m3 / m2.powf(1.5));
    let z_kurtosis = kurtosis_z(n, m4 / (m2 * m2));
    let statistic = z_skew * z_skew + z_kurtosis * z_kurtosis;
    Ok(NormalityTest {
        z_skew,
        z_kurtosis,
        statistic,
        p_value: (-0.5 * statistic).exp(),
    })
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.stats.normaltest / skewtest / kurtosistest.
    #[test]
    fn matches_reference_implementation() {
        let x: Vec<f64> = (0..50)
            .map(|i| {
                let i = i as f64;
                (i * 1.7).sin() + 0.3 * (i * 0.37).cos().powi(3)
            })
            .collect();
        let t = normality_test(&x).unwrap();
        assert!((t.z_skew - -0.048_023_632_568_409).abs() < 1e-10);
        assert!((t.z_kurtosis - -3.897_760_969_353_748_3).abs() < 1e-10);
        assert!((t.statistic - 15.194_846_843_502_537).abs() < 1e-9);
        assert!((t.p_value - 0.000_501_742_548_333_552_2).abs() < 1e-12);

        let y: Vec<f64> = (0..200)
            .map(|i| ((i % 7) as f64).powi(2) * 0.1 + (i as f64).sin())
            .collect();
        let t = normality_test(&y).unwrap();
        assert!((t.statistic - 11.022_440_476_287_926).abs() < 1e-9);
    }

    #[test]
    fn gaussian_sample_not_rejected() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(normality_test(&x).unwrap().p_value > 0.01);
        let u: Vec<f64> = x.iter().map(|v: &f64| v.abs()).collect();
        assert!(normality_test(&u).unwrap().p_value < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(normality_test(&[1.0; 10]).is_err());
        assert_eq!(normality_test(&[2.0; 30]).unwrap().p_value, 1.0);
        let (m, se) = mean_and_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }
}
