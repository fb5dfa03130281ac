//! Closed-form posterior for the initial value of `du/dt = rate u` solved by
//! randomized forward Euler and observed once at step `k`.

use crate::error::{invalid, Result};

/// Observation variance after marginalising the solver noise:
/// `gamma^2 + sigma^2 h^(2p+1) sum_{i<k} (1 + rate h)^(2i)`.
pub fn effective_obs_variance(rate: f64, h: f64, k: usize, noise_var: f64, sigma: f64, p: u32) -> f64 {
    let g = 1.0 + rate * h;
    let g2 = g * g;
    let sum = if (g2 - 1.0).abs() < 1e-12 {
        k as f64
    } else {
        (g2.powi(k as i32) - 1.0) / (g2 - 1.0)
    };
    noise_var + sigma * sigma * h.powi(2 * p as i32 + 1) * sum
}

/// Posterior mean and variance of the initial value under a
/// `N(prior_mean, prior_var)` prior and observation `datum` at step `k`.
#[allow(clippy::too_many_arguments)]
pub fn linear_conjugate_posterior(
    rate: f64,
    h: f64,
    k: usize,
    noise_var: f64,
    sigma: f64,
    p: u32,
    prior_mean: f64,
    prior_var: f64,
    datum: f64,
) -> Result<(f64, f64)> {
    if !(noise_var > 0.0) || !(prior_var > 0.0) || !(h > 0.0) {
        return Err(invalid("variances and step size must be positive"));
    }
    let gain = (1.0 + h * rate).powi(k as i32);
    let gh2 = effective_obs_variance(rate, h, k, noise_var, sigma, p);
    let precision = gain * gain / gh2 + 1.0 / prior_var;
    let var = 1.0 / precision;
    let mean = var * (gain * datum / gh2 + prior_mean / prior_var);
    Ok((mean, var))
}

/// Limit of the posterior variance as the observation step grows, for
/// `p = 1` and a growing solution.
pub fn asymptotic_posterior_variance(rate: f64, h: f64, sigma: f64, prior_var: f64) -> f64 {
    1.0 / (1.0 / prior_var + rate * (2.0 + rate * h) / (sigma * sigma * h * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_variance_value() {
        let g = effective_obs_variance(1.0, 0.1, 10, 0.01, 0.2, 1);
        let direct: f64 = 0.01 + 0.04 * 1e-3 * (0..10).map(|i| 1.1f64.powi(2 * i)).sum::<f64>();
        assert!((g - direct).abs() < 1e-15);
        assert!((g - 0.011091).abs() < 1e-6);
    }

    #[test]
    fn zero_sigma_reduces_to_standard_update() {
        let (m, v) = linear_conjugate_posterior(1.0, 0.1, 10, 0.01, 0.0, 1, 0.0, 1.0, 2.0).unwrap();
        let g = 1.1f64.powi(10);
        let v0 = 1.0 / (g * g / 0.01 + 1.0);
        assert!((v - v0).abs() < 1e-15);
        assert!((m - v0 * g * 2.0 / 0.01).abs() < 1e-12);
    }

    #[test]
    fn variance_approaches_limit() {
        let (_, v) = linear_conjugate_posterior(1.0, 0.1, 400, 0.01, 0.2, 1, 0.0, 1.0, 1.0).unwrap();
        let lim = asymptotic_posterior_variance(1.0, 0.1, 0.2, 1.0);
        assert!((v - lim).abs() / lim < 1e-6);
    }

    #[test]
    fn variance_widens_with_sigma() {
        let (_, a) = linear_conjugate_posterior(1.0, 0.1, 10, 0.01, 0.0, 1, 0.0, 1.0, 1.0).unwrap();
        let (_, b) = linear_conjugate_posterior(1.0, 0.1, 10, 0.01, 0.5, 1, 0.0, 1.0, 1.0).unwrap();
        assert!(b > a);
    }
}
