//! Deterministic one-step maps and their randomized counterparts.
//!
//! A randomized solve iterates `U_{k+1} = Psi_h(U_k) + xi_k(h)` on a fixed
//! uniform mesh and keeps each step's noise record so the trajectory can be
//! evaluated between mesh points as `Psi_tau(U_k) + xi_k(tau)`, with
//! `xi_k(tau)` drawn conditionally on the recorded end increment.

mod models;

pub use models::{FitzHughNagumo, FnField, LinearField, VectorField};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::CsvTable;
use crate::perturbation::{draw_end_increment, NoiseKernel, PerturbationSpec, StepNoiseState};
use crate::rng::substream;

/// Initial value problem `du/dt = f(u)`, `u(0) = u0`, on `[0, t_final]`.
#[derive(Debug, Clone)]
pub struct OdeProblem<F> {
    pub field: F,
    pub u0: Vec<f64>,
    pub t_final: f64,
}

impl<F: VectorField> OdeProblem<F> {
    pub fn new(field: F, u0: Vec<f64>, t_final: f64) -> Result<Self> {
        if field.dim() != u0.len() {
            return Err(invalid(format!(
                "initial state has length {} but the field has dimension {}",
                u0.len(),
                field.dim()
            )));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(invalid(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { field, u0, t_final })
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    /// Number of steps of length `h` covering `[0, t_final]`.
    pub fn steps(&self, h: f64) -> Result<usize> {
        mesh_steps(self.t_final, h)
    }
}

pub(crate) fn mesh_steps(t_final: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) {
        return Err(invalid(format!("step size must be positive, got {h}")));
    }
    let ratio = t_final / h;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 || k < 1.0 {
        return Err(invalid(format!(
            "step size {h} does not divide the interval length {t_final}"
        )));
    }
    Ok(k as usize)
}

/// Deterministic one-step map `Psi_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneStepMethod {
    Euler,
    Rk4,
    /// Mean of the integrated Ornstein-Uhlenbeck model of `f` along a step:
    /// `u + Lambda^-1 (I - exp(-Lambda h)) f(u)` with diagonal positive
    /// `Lambda` (one entry broadcasts to every component).
    IntegratedOu { rates: Vec<f64> },
}

impl OneStepMethod {
    /// Deterministic local order `q`.
    pub fn order(&self) -> u32 {
        match self {
            OneStepMethod::Euler | OneStepMethod::IntegratedOu { .. } => 1,
            OneStepMethod::Rk4 => 4,
        }
    }

    /// Covariance family of the matching step perturbation.
    pub fn kernel(&self) -> NoiseKernel {
        match self {
            OneStepMethod::IntegratedOu { rates } => NoiseKernel::IntegratedOu { rates: rates.clone() },
            _ => NoiseKernel::Brownian,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let OneStepMethod::IntegratedOu { rates } = self {
            if rates.len() != 1 && rates.len() != dim {
                return Err(invalid(format!(
                    "integrated OU needs 1 or {dim} rates, got {}",
                    rates.len()
                )));
            }
            if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
                return Err(invalid("integrated OU rates must be positive and finite"));
            }
        }
        Ok(())
    }

    /// `Psi_tau(u)` for any `tau >= 0`.
    pub(crate) fn advance<F: VectorField + ?Sized>(&self, field: &F, u: &[f64], tau: f64) -> Vec<f64> {
        let n = u.len();
        let mut k1 = vec![0.0; n];
        field.eval(u, &mut k1);
        match self {
            OneStepMethod::Euler => u.iter().zip(&k1).map(|(x, d)| x + tau * d).collect(),
            OneStepMethod::IntegratedOu { rates } => u
                .iter()
                .zip(&k1)
                .enumerate()
                .map(|(i, (x, d))| {
                    let r = if rates.len() == 1 { rates[0] } else { rates[i] };
                    x + (-(-r * tau).exp_m1() / r) * d
                })
                .collect(),
            OneStepMethod::Rk4 => {
                let stage = |k: &[f64], c: f64| -> Vec<f64> {
                    u.iter().zip(k).map(|(x, d)| x + c * tau * d).collect()
                };
                let mut k2 = vec![0.0; n];
                field.eval(&stage(&k1, 0.5), &mut k2);
                let mut k3 = vec![0.0; n];
                field.eval(&stage(&k2, 0.5), &mut k3);
                let mut k4 = vec![0.0; n];
                field.eval(&stage(&k3, 1.0), &mut k4);
                (0..n)
                    .map(|i| u[i] + tau / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        }
    }
}

/// One deterministic step `Psi_h(u)`.
pub fn deterministic_step<F: VectorField + ?Sized>(
    method: &OneStepMethod,
    field: &F,
    u: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(invalid(format!("step size must be positive, got {h}")));
    }
    method.validate(u.len())?;
    Ok(method.advance(field, u, h))
}

/// One randomized step `Psi_h(u) + xi(h)`, returning the noise record.
pub fn probabilistic_step<F: VectorField + ?Sized, R: Rng + ?Sized>(
    method: &OneStepMethod,
    spec: &PerturbationSpec,
    field: &F,
    u: &[f64],
    h: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, StepNoiseState)> {
    let mut next = deterministic_step(method, field, u, h)?;
    let xi = draw_end_increment(spec, h, rng)?;
    if !spec.is_zero() {
        for (x, e) in next.iter_mut().zip(&xi) {
            *x += e;
        }
    }
    Ok((next, StepNoiseState::with_end(h, xi)?))
}

/// One realization of the randomized solver on a uniform mesh.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    h: f64,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    noise: Vec<StepNoiseState>,
}

impl TrajectorySample {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn noise_states(&self) -> &[StepNoiseState] {
        &self.noise
    }

    /// Index of the mesh point at `t` when `t` is one (to 1e-9 relative).
    pub fn mesh_index(&self, t: f64) -> Option<usize> {
        let r = t / self.h;
        let k = r.round();
        ((r - k).abs() <= 1e-9 && k >= 0.0 && (k as usize) < self.states.len()).then_some(k as usize)
    }

    /// Evaluates the trajectory at `s in [0, T]`. Mesh points return the
    /// stored state; other times return `Psi_tau(U_k) + xi_k(tau)` with the
    /// perturbation drawn conditionally on the step's recorded values.
    /// Queries inside one step must be made in increasing time order.
    pub fn interpolate<F: VectorField + ?Sized, R: Rng + ?Sized>(
        &mut self,
        field: &F,
        method: &OneStepMethod,
        spec: &PerturbationSpec,
        s: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let t_final = *self.times.last().unwrap();
        if !(s >= 0.0 && s <= t_final * (1.0 + 1e-12)) {
            return Err(invalid(format!("query time {s} outside [0, {t_final}]")));
        }
        if let Some(k) = self.mesh_index(s) {
            return Ok(self.states[k].clone());
        }
        let k = ((s / self.h).floor() as usize).min(self.states.len() - 2);
        let tau = s - self.times[k];
        let mut value = method.advance(field, &self.states[k], tau);
        if spec.is_zero() {
            return Ok(value);
        }
        let noise = self
            .noise
            .get_mut(k)
            .ok_or_else(|| Error::State("trajectory was solved without noise records".into()))?;
        let xi = match noise.recorded(tau) {
            Some(v) => v.to_vec(),
            None => noise.draw_interior_increment(spec, &method.kernel(), tau, rng)?,
        };
        for (x, e) in value.iter_mut().zip(&xi) {
            *x += e;
        }
        Ok(value)
    }

    /// CSV with header `t,u_1,...,u_n` and one row per mesh point.
    pub fn to_csv(&self) -> CsvTable {
        let n = self.states[0].len();
        let header = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("u_{i}")));
        let mut table = CsvTable::new(header);
        for (t, u) in self.times.iter().zip(&self.states) {
            let mut row = vec![*t];
            row.extend_from_slice(u);
            table.push_floats(&row);
        }
        table
    }
}

/// Solves `problem` with the randomized method. Step `k` draws its
/// perturbation from substream `k` of `seed`, so a trajectory is a pure
/// function of `(seed, k)`.
pub fn solve<F: VectorField + ?Sized>(
    problem: &OdeProblem<&F>,
    method: &OneStepMethod,
    spec: &PerturbationSpec,
    h: f64,
    seed: u64,
) -> Result<TrajectorySample> {
    integrate(problem, method, spec, h, seed, true)
}

/// As [`solve`] but without noise records; the result supports mesh queries
/// only.
pub fn solve_mesh<F: VectorField + ?Sized>(
    problem: &OdeProblem<&F>,
    method: &OneStepMethod,
    spec: &PerturbationSpec,
    h: f64,
    seed: u64,
) -> Result<TrajectorySample> {
    integrate(problem, method, spec, h, seed, false)
}

/// Deterministic solve on the mesh of step `h`.
pub fn solve_deterministic<F: VectorField + ?Sized>(
    problem: &OdeProblem<&F>,
    method: &OneStepMethod,
    h: f64,
) -> Result<TrajectorySample> {
    integrate(problem, method, &PerturbationSpec::zero(problem.dim()), h, 0, false)
}

fn integrate<F: VectorField + ?Sized>(
    problem: &OdeProblem<&F>,
    method: &OneStepMethod,
    spec: &PerturbationSpec,
    h: f64,
    seed: u64,
    keep_noise: bool,
) -> Result<TrajectorySample> {
    let n = problem.dim();
    if spec.dim() != n {
        return Err(invalid(format!(
            "perturbation dimension {} does not match state dimension {n}",
            spec.dim()
        )));
    }
    method.validate(n)?;
    let steps = problem.steps(h)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut noise = Vec::with_capacity(if keep_noise { steps } else { 0 });
    times.push(0.0);
    states.push(problem.u0.clone());
    let field: &F = problem.field;
    for k in 0..steps {
        let mut next = method.advance(field, &states[k], h);
        if !spec.is_zero() {
            let xi = draw_end_increment(spec, h, &mut substream(seed, k as u64))?;
            for (x, e) in next.iter_mut().zip(&xi) {
                *x += e;
            }
            if keep_noise {
                noise.push(StepNoiseState::with_end(h, xi)?);
            }
        }
        let t = (k + 1) as f64 * h;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: k + 1, time: t });
        }
        times.push(t);
        states.push(next);
    }
    Ok(TrajectorySample { h, times, states, noise })
}
