//! Bayesian parameter inference with deterministic and randomized solvers.
//!
//! The randomized posterior integrates the Gaussian likelihood over solver
//! realizations. Its value at a parameter is estimated by averaging the
//! likelihood over `R` independent solves, which is what the pseudo-marginal
//! random-walk Metropolis sampler in [`mcmc`] consumes.

pub mod conjugate;
pub mod mcmc;
mod models;

pub use conjugate::{asymptotic_posterior_variance, effective_obs_variance, linear_conjugate_posterior};
pub use mcmc::{rwm_chain, AdaptConfig, ChainConfig, ChainOutput, Refresh};
pub use models::{FitzHughNagumoModel, LinearInitialValueModel, OdeModel, OdeSimulator};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::rng::derive_seed;
use crate::stats;

/// Noisy observations `d_j = u(tau_j)[components] + eta_j`,
/// `eta_j ~ N(0, diag(noise_var))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    /// Observation times (or spatial points for elliptic problems).
    pub locations: Vec<f64>,
    /// One row per location, one entry per observed component.
    pub values: Vec<Vec<f64>>,
    /// Diagonal of the noise covariance; a single entry applies to every
    /// observed component.
    pub noise_var: Vec<f64>,
    /// Observed state components; `None` observes the full state.
    #[serde(default)]
    pub components: Option<Vec<usize>>,
}

impl ObservationSet {
    pub fn new(locations: Vec<f64>, values: Vec<Vec<f64>>, noise_var: Vec<f64>) -> Result<Self> {
        let obs = Self { locations, values, noise_var, components: None };
        obs.validate()?;
        Ok(obs)
    }

    pub fn with_components(mut self, components: Vec<usize>) -> Result<Self> {
        self.components = Some(components);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.len() != self.values.len() {
            return Err(invalid("observation locations and values differ in length"));
        }
        if self.noise_var.is_empty() || self.noise_var.iter().any(|v| !(*v > 0.0)) {
            return Err(invalid("observation noise variances must be positive"));
        }
        if let Some(width) = self.values.first().map(Vec::len) {
            if self.values.iter().any(|v| v.len() != width) {
                return Err(invalid("observation rows differ in length"));
            }
            if self.noise_var.len() != 1 && self.noise_var.len() != width {
                return Err(invalid("noise variance length does not match observed components"));
            }
            if let Some(c) = &self.components {
                if c.len() != width {
                    return Err(invalid("component mask does not match observation width"));
                }
            }
        }
        Ok(())
    }

    fn noise(&self, i: usize) -> f64 {
        if self.noise_var.len() == 1 {
            self.noise_var[0]
        } else {
            self.noise_var[i]
        }
    }

    fn observed<'a>(&'a self, state: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        let width = self.values.first().map_or(0, Vec::len);
        (0..width).map(move |i| match &self.components {
            Some(c) => state[c[i]],
            None => state[i],
        })
    }
}

/// Gaussian log-likelihood of `obs` given the predicted full states at the
/// observation locations.
pub fn log_likelihood_of(predicted: &[Vec<f64>], obs: &ObservationSet) -> f64 {
    let mut ll = 0.0;
    for (state, row) in predicted.iter().zip(&obs.values) {
        for (i, (u, d)) in obs.observed(state).zip(row).enumerate() {
            let v = obs.noise(i);
            ll += -0.5 * (2.0 * PI * v).ln() - 0.5 * (d - u).powi(2) / v;
        }
    }
    ll
}

/// Gaussian log-likelihood with the trajectory supplied as an evaluator.
pub fn log_likelihood(
    mut evaluator: impl FnMut(f64) -> Result<Vec<f64>>,
    obs: &ObservationSet,
) -> Result<f64> {
    let predicted = obs
        .locations
        .iter()
        .map(|&t| evaluator(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_likelihood_of(&predicted, obs))
}

/// Prior on one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    /// `ln theta ~ N(log_mean, log_sd^2)`.
    LogNormal { log_mean: f64, log_sd: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let sd = match self {
            Prior::Normal { sd, .. } => *sd,
            Prior::LogNormal { log_sd, .. } => *log_sd,
        };
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(invalid("prior scale must be positive and finite"));
        }
        Ok(())
    }

    /// Sampler coordinate: `ln theta` for log-normal priors, `theta` otherwise.
    pub fn to_internal(&self, theta: f64) -> Option<f64> {
        match self {
            Prior::Normal { .. } => theta.is_finite().then_some(theta),
            Prior::LogNormal { .. } => (theta > 0.0 && theta.is_finite()).then(|| theta.ln()),
        }
    }

    pub fn from_internal(&self, z: f64) -> f64 {
        match self {
            Prior::Normal { .. } => z,
            Prior::LogNormal { .. } => z.exp(),
        }
    }

    /// Log density of the internal coordinate.
    pub fn log_density_internal(&self, z: f64) -> f64 {
        let (m, s) = match self {
            Prior::Normal { mean, sd } => (*mean, *sd),
            Prior::LogNormal { log_mean, log_sd } => (*log_mean, *log_sd),
        };
        -0.5 * (2.0 * PI * s * s).ln() - 0.5 * ((z - m) / s).powi(2)
    }

    pub fn mean(&self) -> f64 {
        match self {
            Prior::Normal { mean, .. } => *mean,
            Prior::LogNormal { log_mean, log_sd } => (log_mean + 0.5 * log_sd * log_sd).exp(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Prior::Normal { sd, .. } => sd * sd,
            Prior::LogNormal { log_mean, log_sd } => {
                let s2 = log_sd * log_sd;
                s2.exp_m1() * (2.0 * log_mean + s2).exp()
            }
        }
    }
}

/// Which solver the likelihood uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Deterministic,
    Randomized {
        sigma: f64,
        p: u32,
        /// Inner solves averaged per likelihood estimate.
        #[serde(default = "default_draws")]
        draws: usize,
    },
}

fn default_draws() -> usize {
    10
}

impl SolverMode {
    /// True when every solve is deterministic, including `sigma = 0`.
    pub fn is_deterministic(&self) -> bool {
        match self {
            SolverMode::Deterministic => true,
            SolverMode::Randomized { sigma, .. } => *sigma == 0.0,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            SolverMode::Deterministic => 0.0,
            SolverMode::Randomized { sigma, .. } => *sigma,
        }
    }

    pub fn draws(&self) -> usize {
        match self {
            SolverMode::Deterministic => 1,
            SolverMode::Randomized { draws, .. } => *draws,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SolverMode::Randomized { sigma, p, draws } = self {
            if !(*sigma >= 0.0) || !sigma.is_finite() {
                return Err(invalid("solver noise scale must be finite and >= 0"));
            }
            if *p < 1 {
                return Err(invalid("perturbation order must be >= 1"));
            }
            if *draws < 1 {
                return Err(invalid("need at least one inner solve per likelihood estimate"));
            }
        }
        Ok(())
    }
}

/// Prior and solver configuration of a posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSpec {
    pub priors: Vec<Prior>,
    pub solver: SolverMode,
}

impl PosteriorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.priors.is_empty() {
            return Err(invalid("posterior has no parameters"));
        }
        for p in &self.priors {
            p.validate()?;
        }
        self.solver.validate()
    }
}

/// Forward model mapping parameters to predicted states at the observation
/// locations.
pub trait Simulator: Sync {
    fn n_params(&self) -> usize;

    /// Predicted full states at `locations`. With a randomized `solver`,
    /// `seed` fixes the solver realization.
    fn predict(&self, theta: &[f64], solver: &SolverMode, locations: &[f64], seed: u64) -> Result<Vec<Vec<f64>>>;
}

fn is_numerical_failure(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::Singular { .. })
}

/// Log-likelihood of one solve; numerical blow-ups count as zero likelihood.
fn single_loglik<S: Simulator>(sim: &S, theta: &[f64], solver: &SolverMode, obs: &ObservationSet, seed: u64) -> Result<f64> {
    match sim.predict(theta, solver, &obs.locations, seed) {
        Ok(pred) => Ok(log_likelihood_of(&pred, obs)),
        Err(e) if is_numerical_failure(&e) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Log of the average likelihood over `R` randomized solves (one solve when
/// the solver is deterministic). Inner solve `r` uses
/// `derive_seed(seed, r)`, so the estimate is a function of `seed`.
pub fn pseudo_marginal_loglik<S: Simulator>(
    sim: &S,
    theta: &[f64],
    solver: &SolverMode,
    obs: &ObservationSet,
    seed: u64,
) -> Result<f64> {
    if solver.is_deterministic() {
        return single_loglik(sim, theta, &SolverMode::Deterministic, obs, seed);
    }
    let lls: Vec<f64> = (0..solver.draws())
        .into_par_iter()
        .map(|r| single_loglik(sim, theta, solver, obs, derive_seed(seed, r as u64)))
        .collect::<Result<_>>()?;
    Ok(stats::log_mean_exp(&lls))
}
