//! Adaptive random-walk Metropolis on the internal parameter coordinates.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::CsvTable;
use crate::rng::{derive_path, substream};
use crate::stats;

use super::{pseudo_marginal_loglik, ObservationSet, PosteriorSpec, Simulator};

/// How the likelihood estimate of the current state is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refresh {
    /// Re-estimate the current state's likelihood every iteration.
    #[default]
    Noisy,
    /// Keep the accepted estimate (exact pseudo-marginal chain).
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    pub target_acceptance: f64,
    /// Iteration after which the empirical covariance shapes proposals.
    pub covariance_start: usize,
    /// Robbins-Monro step decay exponent.
    pub decay: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self { target_acceptance: 0.234, covariance_start: 200, decay: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_steps: usize,
    /// Parameter values (not internal coordinates) at iteration 0.
    pub initial: Vec<f64>,
    /// Initial proposal standard deviation in internal coordinates.
    pub initial_scale: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default)]
    pub refresh: Refresh,
    #[serde(default)]
    pub adapt: AdaptConfig,
}

fn default_burn_in() -> f64 {
    0.1
}

impl ChainConfig {
    pub fn new(n_steps: usize, initial: Vec<f64>, initial_scale: f64) -> Self {
        Self {
            n_steps,
            initial,
            initial_scale,
            burn_in_fraction: default_burn_in(),
            refresh: Refresh::default(),
            adapt: AdaptConfig::default(),
        }
    }

    pub fn burn_in(&self) -> usize {
        (self.n_steps as f64 * self.burn_in_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    /// Parameter values after every iteration, burn-in included.
    pub samples: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    pub burn_in: usize,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    pub seed: u64,
}

impl ChainOutput {
    pub fn kept(&self) -> &[Vec<f64>] {
        &self.samples[self.burn_in..]
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.kept().iter().map(|s| s[i]).collect()
    }

    pub fn mean(&self, i: usize) -> f64 {
        stats::mean(&self.component(i))
    }

    pub fn variance(&self, i: usize) -> f64 {
        stats::variance(&self.component(i))
    }

    /// Batch-means Monte Carlo standard error of the posterior mean.
    pub fn mean_mcse(&self, i: usize) -> f64 {
        stats::batch_means_se(&self.component(i))
    }

    /// Batch-means Monte Carlo standard error of the posterior variance.
    pub fn variance_mcse(&self, i: usize) -> f64 {
        let x = self.component(i);
        let m = stats::mean(&x);
        let sq: Vec<f64> = x.iter().map(|v| (v - m).powi(2)).collect();
        stats::batch_means_se(&sq)
    }

    /// CSV with header `iter,theta_1..theta_d,log_post`.
    pub fn to_csv(&self) -> CsvTable {
        let d = self.samples.first().map_or(0, Vec::len);
        let header = std::iter::once("iter".to_string())
            .chain((1..=d).map(|i| format!("theta_{i}")))
            .chain(std::iter::once("log_post".to_string()));
        let mut table = CsvTable::new(header);
        for (it, (s, lp)) in self.samples.iter().zip(&self.log_post).enumerate() {
            let mut row = vec![it as f64];
            row.extend_from_slice(s);
            row.push(*lp);
            table.push_floats(&row);
        }
        table
    }
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Running mean and covariance (Welford).
struct RunningCov {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<Vec<f64>>,
}

impl RunningCov {
    fn new(d: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; d], m2: vec![vec![0.0; d]; d] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / self.n;
        }
        for i in 0..x.len() {
            for j in 0..x.len() {
                self.m2[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.mean.len();
        let denom = (self.n - 1.0).max(1.0);
        (0..d)
            .map(|i| (0..d).map(|j| self.m2[i][j] / denom + if i == j { 1e-10 } else { 0.0 }).collect())
            .collect()
    }
}

/// Runs an adaptive random-walk Metropolis chain on the posterior of
/// `spec` given `obs`. Proposal shape and scale adapt during burn-in and are
/// frozen afterwards. With a randomized solver the likelihood is the
/// pseudo-marginal estimate from [`pseudo_marginal_loglik`].
pub fn rwm_chain<S: Simulator>(
    sim: &S,
    spec: &PosteriorSpec,
    obs: &ObservationSet,
    config: &ChainConfig,
    seed: u64,
) -> Result<ChainOutput> {
    spec.validate()?;
    obs.validate()?;
    let d = spec.priors.len();
    if sim.n_params() != d || config.initial.len() != d {
        return Err(invalid(format!(
            "parameter count mismatch: simulator {}, priors {d}, initial {}",
            sim.n_params(),
            config.initial.len()
        )));
    }
    if config.n_steps == 0 {
        return Err(invalid("chain needs at least one step"));
    }
    if !(config.initial_scale > 0.0) || !(0.0..1.0).contains(&config.burn_in_fraction) {
        return Err(invalid("initial scale must be positive and burn-in fraction in [0, 1)"));
    }

    let to_theta = |z: &[f64]| -> Vec<f64> { spec.priors.iter().zip(z).map(|(p, z)| p.from_internal(*z)).collect() };
    let log_prior = |z: &[f64]| -> f64 { spec.priors.iter().zip(z).map(|(p, z)| p.log_density_internal(*z)).sum() };
    let loglik = |z: &[f64], it: u64, slot: u64| {
        pseudo_marginal_loglik(sim, &to_theta(z), &spec.solver, obs, derive_path(seed, &[1, it, slot]))
    };

    let mut z: Vec<f64> = spec
        .priors
        .iter()
        .zip(&config.initial)
        .map(|(p, t)| p.to_internal(*t))
        .collect::<Option<_>>()
        .ok_or_else(|| invalid("prior density is zero at the initial point"))?;
    let mut lp_prior = log_prior(&z);
    let mut ll = loglik(&z, 0, 2)?;
    if !lp_prior.is_finite() {
        return Err(invalid("prior density is zero at the initial point"));
    }

    let refresh = config.refresh == Refresh::Noisy && !spec.solver.is_deterministic();
    let burn_in = config.burn_in();
    let mut rng = substream(seed, 0);
    let mut log_scale = config.initial_scale.ln();
    let mut chol: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut running = RunningCov::new(d);
    let shape = 2.38 / (d as f64).sqrt();

    let mut samples = Vec::with_capacity(config.n_steps);
    let mut log_post = Vec::with_capacity(config.n_steps);
    let mut accepted_after = 0usize;

    for it in 0..config.n_steps {
        let adapting = it < burn_in;
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let scale = log_scale.exp();
        let proposal: Vec<f64> = (0..d)
            .map(|i| z[i] + scale * (0..=i).map(|j| chol[i][j] * eps[j]).sum::<f64>())
            .collect();
        let u: f64 = rng.random();

        if refresh {
            ll = loglik(&z, it as u64, 0)?;
        }
        let prior_new = log_prior(&proposal);
        let ll_new = loglik(&proposal, it as u64, 1)?;
        let log_ratio = (prior_new + ll_new) - (lp_prior + ll);
        let alpha = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        if u.ln() < log_ratio {
            z = proposal;
            lp_prior = prior_new;
            ll = ll_new;
            if !adapting {
                accepted_after += 1;
            }
        }

        if adapting {
            running.push(&z);
            let gamma = 1.0 / ((it + 1) as f64).powf(config.adapt.decay);
            log_scale += gamma * (alpha - config.adapt.target_acceptance);
            if it + 1 >= config.adapt.covariance_start {
                if let Some(l) = cholesky(&running.covariance()) {
                    chol = l.into_iter().map(|row| row.into_iter().map(|v| v * shape).collect()).collect();
                }
            }
        }
        samples.push(to_theta(&z));
        log_post.push(lp_prior + ll);
    }

    let kept = config.n_steps - burn_in;
    Ok(ChainOutput {
        samples,
        log_post,
        burn_in,
        acceptance_rate: if kept > 0 { accepted_after as f64 / kept as f64 } else { 0.0 },
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{Prior, SolverMode};
    use crate::error::Result;

    /// Identity forward model: predicts `theta` at every location.
    struct Direct;

    impl Simulator for Direct {
        fn n_params(&self) -> usize {
            1
        }
        fn predict(&self, theta: &[f64], _: &SolverMode, locations: &[f64], _: u64) -> Result<Vec<Vec<f64>>> {
            Ok(locations.iter().map(|_| theta.to_vec()).collect())
        }
    }

    fn gaussian_setup() -> (PosteriorSpec, ObservationSet) {
        let spec = PosteriorSpec { priors: vec![Prior::Normal { mean: 0.0, sd: 1.0 }], solver: SolverMode::Deterministic };
        let obs = ObservationSet::new(vec![0.0], vec![vec![1.0]], vec![1.0]).unwrap();
        (spec, obs)
    }

    #[test]
    fn gaussian_target_moments() {
        let (spec, obs) = gaussian_setup();
        let out = rwm_chain(&Direct, &spec, &obs, &ChainConfig::new(40_000, vec![0.0], 1.0), 3).unwrap();
        assert!((out.mean(0) - 0.5).abs() < 4.0 * out.mean_mcse(0) + 0.01);
        assert!((out.variance(0) - 0.5).abs() < 4.0 * out.variance_mcse(0) + 0.01);
        assert!(out.acceptance_rate > 0.1 && out.acceptance_rate < 0.6);
    }

    #[test]
    fn chain_is_reproducible() {
        let (spec, obs) = gaussian_setup();
        let cfg = ChainConfig::new(500, vec![0.0], 1.0);
        let a = rwm_chain(&Direct, &spec, &obs, &cfg, 9).unwrap();
        let b = rwm_chain(&Direct, &spec, &obs, &cfg, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lognormal_prior_rejects_nonpositive_start() {
        let spec = PosteriorSpec {
            priors: vec![Prior::LogNormal { log_mean: 0.0, log_sd: 1.0 }],
            solver: SolverMode::Deterministic,
        };
        let obs = ObservationSet::new(vec![0.0], vec![vec![1.0]], vec![1.0]).unwrap();
        let err = rwm_chain(&Direct, &spec, &obs, &ChainConfig::new(10, vec![-1.0], 1.0), 0);
        assert!(err.is_err());
    }

    #[test]
    fn csv_layout() {
        let (spec, obs) = gaussian_setup();
        let out = rwm_chain(&Direct, &spec, &obs, &ChainConfig::new(5, vec![0.0], 1.0), 1).unwrap();
        let csv = out.to_csv().to_csv_string();
        assert!(csv.starts_with("iter,theta_1,log_post\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn cholesky_of_known_matrix() {
        let l = cholesky(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert!((l[0][0] - 2.0).abs() < 1e-15);
        assert!((l[1][0] - 1.0).abs() < 1e-15);
        assert!((l[1][1] - 2f64.sqrt()).abs() < 1e-15);
        assert!(cholesky(&[vec![-1.0]]).is_none());
    }
}
