//! Randomized one-step ODE integrators and randomized 1D Galerkin finite
//! elements, with empirical convergence studies, noise-scale calibration
//! against classical error indicators, and Bayesian inference through
//! pseudo-marginal random-walk Metropolis.

pub mod bayes;
pub mod calibration;
pub mod cli;
pub mod convergence;
mod error;
pub mod fem1d;
pub mod io;
pub mod ode;
pub mod perturbation;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use perturbation::{NoiseKernel, PerturbationSpec, StepNoiseState};
