use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::bayes::{ChainConfig, Prior, SolverMode};
use crate::error::{Error, Result};
use crate::ode::{FitzHughNagumo, LinearField, OneStepMethod, VectorField};

pub const SCHEMA_VERSION: u32 = 1;

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(field, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(field, format!("must be finite and >= 0, got {v}")))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(config_err(field, format!("must be >= {min}, got {v}")))
    }
}

fn ladder(field: &str, hs: &[f64], min_len: usize) -> Result<()> {
    at_least(&format!("{field} length"), hs.len(), min_len)?;
    hs.iter().try_for_each(|h| positive(field, *h))
}

fn wrap(field: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| config_err(field, e))
}

/// A run configuration: one experiment plus seed and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Experiment {
    ForwardEnsemble(ForwardEnsemble),
    Calibrate(CalibrateOde),
    OdePosterior(OdePosterior),
    LinearConjugate(LinearConjugate),
    StrongOrder(StrongOrder),
    WeakOrderLinear(WeakOrderLinear),
    FemRates(FemRatesParams),
    EllipticInverse(EllipticInverse),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::ForwardEnsemble(_) => "forward_ensemble",
            Experiment::Calibrate(_) => "calibrate",
            Experiment::OdePosterior(_) => "ode_posterior",
            Experiment::LinearConjugate(_) => "linear_conjugate",
            Experiment::StrongOrder(_) => "strong_order",
            Experiment::WeakOrderLinear(_) => "weak_order_linear",
            Experiment::FemRates(_) => "fem_rates",
            Experiment::EllipticInverse(_) => "elliptic_inverse",
        }
    }
}

impl ExperimentConfig {
    /// Checks every value the run will use.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        match &self.experiment {
            Experiment::ForwardEnsemble(p) => p.validate(),
            Experiment::Calibrate(p) => p.validate(),
            Experiment::OdePosterior(p) => p.validate(),
            Experiment::LinearConjugate(p) => p.validate(),
            Experiment::StrongOrder(p) => p.validate(),
            Experiment::WeakOrderLinear(p) => p.validate(),
            Experiment::FemRates(p) => p.validate(),
            Experiment::EllipticInverse(p) => p.validate(),
        }
    }
}

/// Initial value problem selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OdeSpec {
    Linear { rate: f64, u0: f64, t_final: f64 },
    FitzhughNagumo { a: f64, b: f64, c: f64, v0: f64, r0: f64, t_final: f64 },
}

impl OdeSpec {
    pub fn field(&self) -> Box<dyn VectorField> {
        match self {
            OdeSpec::Linear { rate, .. } => Box::new(LinearField::scalar(*rate)),
            OdeSpec::FitzhughNagumo { a, b, c, .. } => Box::new(FitzHughNagumo { a: *a, b: *b, c: *c }),
        }
    }

    pub fn u0(&self) -> Vec<f64> {
        match self {
            OdeSpec::Linear { u0, .. } => vec![*u0],
            OdeSpec::FitzhughNagumo { v0, r0, .. } => vec![*v0, *r0],
        }
    }

    pub fn t_final(&self) -> f64 {
        match self {
            OdeSpec::Linear { t_final, .. } | OdeSpec::FitzhughNagumo { t_final, .. } => *t_final,
        }
    }

    pub fn dim(&self) -> usize {
        self.u0().len()
    }

    fn validate(&self) -> Result<()> {
        positive("problem.t_final", self.t_final())?;
        if let OdeSpec::FitzhughNagumo { c, .. } = self {
            if *c == 0.0 {
                return Err(config_err("problem.c", "must be non-zero"));
            }
        }
        Ok(())
    }
}

fn check_method(method: &OneStepMethod, dim: usize) -> Result<()> {
    wrap("method", method.validate(dim))
}

fn check_mesh(field: &str, t_final: f64, hs: &[f64]) -> Result<()> {
    for h in hs {
        wrap(field, crate::ode::mesh_steps(t_final, *h).map(|_| ()))?;
    }
    Ok(())
}

/// Log-spaced grid of noise scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    fn validate(&self, field: &str) -> Result<()> {
        positive(&format!("{field}.lo"), self.lo)?;
        positive(&format!("{field}.hi"), self.hi)?;
        at_least(&format!("{field}.n"), self.n, 2)?;
        if self.hi <= self.lo {
            return Err(config_err(field, "hi must exceed lo"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        crate::calibration::log_grid(self.lo, self.hi, self.n)
    }
}

/// Randomized trajectory ensembles for several step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardEnsemble {
    pub problem: OdeSpec,
    pub method: OneStepMethod,
    pub h_values: Vec<f64>,
    pub p: u32,
    pub sigma: f64,
    pub draws: usize,
    /// Only states at multiples of this time are written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<f64>,
}

impl ForwardEnsemble {
    fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        check_method(&self.method, self.problem.dim())?;
        ladder("h_values", &self.h_values, 1)?;
        check_mesh("h_values", self.problem.t_final(), &self.h_values)?;
        at_least("p", self.p as usize, 1)?;
        non_negative("sigma", self.sigma)?;
        at_least("draws", self.draws, 1)?;
        if let Some(dt) = self.output_every {
            positive("output_every", dt)?;
            for h in &self.h_values {
                let r = dt / h;
                if (r - r.round()).abs() > 1e-9 || r.round() < 1.0 {
                    return Err(config_err("output_every", format!("is not a multiple of step {h}")));
                }
            }
        }
        Ok(())
    }
}

/// Noise-scale calibration of an ODE solver for several step sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateOde {
    pub problem: OdeSpec,
    pub method: OneStepMethod,
    pub h_values: Vec<f64>,
    pub p: u32,
    pub grid: GridSpec,
    pub n_mc: usize,
}

impl CalibrateOde {
    fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        check_method(&self.method, self.problem.dim())?;
        ladder("h_values", &self.h_values, 1)?;
        let doubled: Vec<f64> = self.h_values.iter().map(|h| 2.0 * h).collect();
        check_mesh("h_values", self.problem.t_final(), &doubled)?;
        at_least("p", self.p as usize, 1)?;
        self.grid.validate("grid")?;
        at_least("n_mc", self.n_mc, 2)
    }
}

fn check_priors(priors: &[Prior], n: usize) -> Result<()> {
    if priors.len() != n {
        return Err(config_err("priors", format!("expected {n} priors, got {}", priors.len())));
    }
    priors.iter().enumerate().try_for_each(|(i, p)| wrap(&format!("priors[{i}]"), p.validate()))
}

fn check_chain(chain: &ChainConfig, n: usize) -> Result<()> {
    at_least("chain.n_steps", chain.n_steps, 1)?;
    if chain.initial.len() != n {
        return Err(config_err("chain.initial", format!("expected {n} values, got {}", chain.initial.len())));
    }
    positive("chain.initial_scale", chain.initial_scale)?;
    if !(0.0..1.0).contains(&chain.burn_in_fraction) {
        return Err(config_err("chain.burn_in_fraction", "must lie in [0, 1)"));
    }
    let t = chain.adapt.target_acceptance;
    if !(t > 0.0 && t < 1.0) {
        return Err(config_err("chain.adapt.target_acceptance", "must lie in (0, 1)"));
    }
    if !(chain.adapt.decay > 0.5 && chain.adapt.decay <= 1.0) {
        return Err(config_err("chain.adapt.decay", "must lie in (0.5, 1]"));
    }
    Ok(())
}

/// FitzHugh-Nagumo parameter inference from synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdePosterior {
    /// Data-generating `(a, b, c)`.
    pub truth: Vec<f64>,
    pub initial_state: Vec<f64>,
    pub obs_times: Vec<f64>,
    pub noise_var: f64,
    /// RK4 step used to generate the data.
    pub data_h: f64,
    pub method: OneStepMethod,
    pub h: f64,
    pub priors: Vec<Prior>,
    pub solver: SolverMode,
    pub chain: ChainConfig,
}

impl OdePosterior {
    pub fn t_final(&self) -> f64 {
        self.obs_times.iter().cloned().fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        if self.truth.len() != 3 {
            return Err(config_err("truth", "expected (a, b, c)"));
        }
        if self.initial_state.len() != 2 {
            return Err(config_err("initial_state", "expected (V, R)"));
        }
        if self.obs_times.is_empty() {
            return Err(config_err("obs_times", "is empty"));
        }
        self.obs_times.iter().try_for_each(|t| positive("obs_times", *t))?;
        if self.obs_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("obs_times", "must be strictly increasing"));
        }
        positive("noise_var", self.noise_var)?;
        positive("data_h", self.data_h)?;
        positive("h", self.h)?;
        check_mesh("h", self.t_final(), &[self.h])?;
        check_mesh("data_h", self.t_final(), &[self.data_h])?;
        for t in &self.obs_times {
            let r = t / self.data_h;
            if (r - r.round()).abs() > 1e-9 {
                return Err(config_err("obs_times", format!("{t} is not on the data mesh")));
            }
        }
        check_method(&self.method, 2)?;
        check_priors(&self.priors, 3)?;
        wrap("solver", self.solver.validate())?;
        check_chain(&self.chain, 3)
    }
}

/// Inference of the initial value of `du/dt = rate u` from one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConjugate {
    pub rate: f64,
    pub h: f64,
    pub obs_step: usize,
    pub noise_var: f64,
    pub sigma: f64,
    pub p: u32,
    pub draws: usize,
    pub prior_mean: f64,
    pub prior_var: f64,
    /// Data are `exp(rate obs_step h) true_initial + noise`.
    pub true_initial: f64,
    pub chain: ChainConfig,
}

impl LinearConjugate {
    fn validate(&self) -> Result<()> {
        positive("rate", self.rate)?;
        positive("h", self.h)?;
        at_least("obs_step", self.obs_step, 1)?;
        positive("noise_var", self.noise_var)?;
        non_negative("sigma", self.sigma)?;
        at_least("p", self.p as usize, 1)?;
        at_least("draws", self.draws, 1)?;
        positive("prior_var", self.prior_var)?;
        check_chain(&self.chain, 1)
    }
}

/// Strong convergence order of a randomized one-step method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongOrder {
    pub problem: OdeSpec,
    pub method: OneStepMethod,
    pub p: u32,
    pub sigma: f64,
    pub h_values: Vec<f64>,
    pub samples: usize,
}

impl StrongOrder {
    fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        check_method(&self.method, self.problem.dim())?;
        at_least("p", self.p as usize, 1)?;
        non_negative("sigma", self.sigma)?;
        ladder("h_values", &self.h_values, 3)?;
        check_mesh("h_values", self.problem.t_final(), &self.h_values)?;
        at_least("samples", self.samples, 50)
    }
}

/// Closed-form weak errors of randomized Euler on `du/dt = rate u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakOrderLinear {
    pub rate: f64,
    pub u0: f64,
    pub t_final: f64,
    pub p: u32,
    pub sigma: f64,
    pub h_values: Vec<f64>,
    pub observables: Vec<String>,
}

impl WeakOrderLinear {
    fn validate(&self) -> Result<()> {
        positive("t_final", self.t_final)?;
        at_least("p", self.p as usize, 1)?;
        non_negative("sigma", self.sigma)?;
        ladder("h_values", &self.h_values, 3)?;
        check_mesh("h_values", self.t_final, &self.h_values)?;
        if self.observables.is_empty() {
            return Err(config_err("observables", "is empty"));
        }
        for o in &self.observables {
            wrap("observables", crate::convergence::Observable::from_name(o).map(|_| ()))?;
        }
        Ok(())
    }
}

fn check_kappa(field: &str, free: &[f64]) -> Result<()> {
    wrap(field, crate::fem1d::CoefficientField::from_free(free).map(|_| ()))
}

fn check_elements(field: &str, ns: &[usize]) -> Result<()> {
    for n in ns {
        wrap(field, crate::fem1d::Mesh1D::new(*n).map(|_| ()))?;
    }
    Ok(())
}

/// Convergence rates of (randomized) linear finite elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FemRatesParams {
    pub kappa_free: Vec<f64>,
    pub p: u32,
    pub sigma: f64,
    pub n_kl: usize,
    pub n_elements: Vec<usize>,
    pub samples: usize,
    pub reference_elements: usize,
    /// Draws per mesh for the basis energy scaling.
    pub energy_samples: usize,
}

impl FemRatesParams {
    fn validate(&self) -> Result<()> {
        check_kappa("kappa_free", &self.kappa_free)?;
        at_least("p", self.p as usize, 1)?;
        non_negative("sigma", self.sigma)?;
        at_least("n_kl", self.n_kl, 1)?;
        at_least("n_elements length", self.n_elements.len(), 2)?;
        check_elements("n_elements", &self.n_elements)?;
        check_elements("reference_elements", &[self.reference_elements])?;
        for n in &self.n_elements {
            if self.reference_elements % n != 0 {
                return Err(config_err("reference_elements", format!("does not refine {n}")));
            }
        }
        at_least("samples", self.samples, 1)?;
        at_least("energy_samples", self.energy_samples, 2)
    }
}

/// Calibration of the basis noise scale per mesh, marginal over the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FemCalibration {
    pub grid: GridSpec,
    pub n_mc: usize,
    pub prior_draws: usize,
    /// Points where linear and quadratic elements are compared.
    pub locations: Vec<f64>,
}

/// Conductivity inference from synthetic point observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticInverse {
    pub true_kappa_free: Vec<f64>,
    pub locations: Vec<f64>,
    pub noise_var: f64,
    /// Quadratic-element mesh used to generate the data.
    pub data_elements: usize,
    pub n_elements: Vec<usize>,
    pub n_kl: usize,
    pub priors: Vec<Prior>,
    pub solvers: Vec<SolverMode>,
    pub chain: ChainConfig,
    /// When present, randomized solvers use the calibrated scale of each mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<FemCalibration>,
}

impl EllipticInverse {
    fn validate(&self) -> Result<()> {
        check_kappa("true_kappa_free", &self.true_kappa_free)?;
        if self.locations.is_empty() || self.locations.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(config_err("locations", "must be non-empty and inside [0, 1]"));
        }
        positive("noise_var", self.noise_var)?;
        check_elements("data_elements", &[self.data_elements])?;
        at_least("n_elements length", self.n_elements.len(), 1)?;
        check_elements("n_elements", &self.n_elements)?;
        at_least("n_kl", self.n_kl, 1)?;
        check_priors(&self.priors, crate::fem1d::KAPPA_PIECES - 1)?;
        at_least("solvers length", self.solvers.len(), 1)?;
        self.solvers.iter().try_for_each(|s| wrap("solvers", s.validate()))?;
        check_chain(&self.chain, crate::fem1d::KAPPA_PIECES - 1)?;
        if let Some(c) = &self.calibration {
            c.grid.validate("calibration.grid")?;
            at_least("calibration.n_mc", c.n_mc, 2)?;
            at_least("calibration.prior_draws", c.prior_draws, 1)?;
            if c.locations.is_empty() || c.locations.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(config_err("calibration.locations", "must be non-empty and inside [0, 1]"));
            }
        }
        Ok(())
    }
}
