use crate::error::{invalid, Result};
use crate::ode::{solve, solve_deterministic, solve_mesh, FitzHughNagumo, LinearField, OdeProblem, OneStepMethod, VectorField};
use crate::perturbation::PerturbationSpec;
use crate::rng::substream;

use super::{Simulator, SolverMode};

/// Parameterised initial value problem.
pub trait OdeModel: Sync {
    type Field: VectorField;

    fn n_params(&self) -> usize;
    fn t_final(&self) -> f64;
    /// Vector field and initial state for `theta`.
    fn instantiate(&self, theta: &[f64]) -> Result<(Self::Field, Vec<f64>)>;
}

/// FitzHugh-Nagumo with unknown `(a, b, c)` and a fixed initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct FitzHughNagumoModel {
    pub u0: Vec<f64>,
    pub t_final: f64,
}

impl Default for FitzHughNagumoModel {
    fn default() -> Self {
        Self { u0: vec![-1.0, 1.0], t_final: 20.0 }
    }
}

impl OdeModel for FitzHughNagumoModel {
    type Field = FitzHughNagumo;

    fn n_params(&self) -> usize {
        3
    }
    fn t_final(&self) -> f64 {
        self.t_final
    }
    fn instantiate(&self, theta: &[f64]) -> Result<(FitzHughNagumo, Vec<f64>)> {
        if theta.len() != 3 {
            return Err(invalid("FitzHugh-Nagumo takes three parameters"));
        }
        if theta[2] == 0.0 {
            return Err(invalid("FitzHugh-Nagumo time scale must be non-zero"));
        }
        Ok((FitzHughNagumo { a: theta[0], b: theta[1], c: theta[2] }, self.u0.clone()))
    }
}

/// `du/dt = rate u` with the initial value as the single unknown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearInitialValueModel {
    pub rate: f64,
    pub t_final: f64,
}

impl OdeModel for LinearInitialValueModel {
    type Field = LinearField;

    fn n_params(&self) -> usize {
        1
    }
    fn t_final(&self) -> f64 {
        self.t_final
    }
    fn instantiate(&self, theta: &[f64]) -> Result<(LinearField, Vec<f64>)> {
        if theta.len() != 1 {
            return Err(invalid("linear model takes one parameter"));
        }
        Ok((LinearField::scalar(self.rate), vec![theta[0]]))
    }
}

/// Simulator that solves an [`OdeModel`] on a fixed mesh and evaluates the
/// trajectory at the observation times.
#[derive(Debug, Clone)]
pub struct OdeSimulator<M> {
    pub model: M,
    pub method: OneStepMethod,
    pub h: f64,
}

impl<M: OdeModel> OdeSimulator<M> {
    pub fn new(model: M, method: OneStepMethod, h: f64) -> Self {
        Self { model, method, h }
    }
}

impl<M: OdeModel> Simulator for OdeSimulator<M> {
    fn n_params(&self) -> usize {
        self.model.n_params()
    }

    fn predict(&self, theta: &[f64], solver: &SolverMode, locations: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
        let (field, u0) = self.model.instantiate(theta)?;
        let problem = OdeProblem::new(&field, u0, self.model.t_final())?;
        let dim = problem.dim();
        let (spec, mut traj) = match solver {
            SolverMode::Randomized { sigma, p, .. } if *sigma != 0.0 => {
                let spec = PerturbationSpec::new(*p, *sigma, dim)?;
                let on_mesh = locations.iter().all(|t| {
                    let r = t / self.h;
                    (r - r.round()).abs() <= 1e-9
                });
                let traj = if on_mesh {
                    solve_mesh(&problem, &self.method, &spec, self.h, seed)?
                } else {
                    solve(&problem, &self.method, &spec, self.h, seed)?
                };
                (spec, traj)
            }
            _ => (PerturbationSpec::zero(dim), solve_deterministic(&problem, &self.method, self.h)?),
        };
        let mut rng = substream(seed, u64::MAX);
        locations
            .iter()
            .map(|&t| traj.interpolate(&field, &self.method, &spec, t, &mut rng))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_prediction_matches_euler() {
        let sim = OdeSimulator::new(LinearInitialValueModel { rate: 1.0, t_final: 1.0 }, OneStepMethod::Euler, 0.1);
        let pred = sim.predict(&[2.0], &SolverMode::Deterministic, &[0.5, 1.0], 0).unwrap();
        assert!((pred[0][0] - 2.0 * 1.1f64.powi(5)).abs() < 1e-12);
        assert!((pred[1][0] - 2.0 * 1.1f64.powi(10)).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_equals_deterministic() {
        let sim = OdeSimulator::new(FitzHughNagumoModel::default(), OneStepMethod::Rk4, 0.1);
        let theta = [0.2, 0.2, 3.0];
        let locs = [1.0, 2.55, 20.0];
        let det = sim.predict(&theta, &SolverMode::Deterministic, &locs, 7).unwrap();
        let zero = sim
            .predict(&theta, &SolverMode::Randomized { sigma: 0.0, p: 4, draws: 3 }, &locs, 7)
            .unwrap();
        assert_eq!(det, zero);
    }

    #[test]
    fn randomized_prediction_is_seeded() {
        let sim = OdeSimulator::new(FitzHughNagumoModel::default(), OneStepMethod::Euler, 0.1);
        let mode = SolverMode::Randomized { sigma: 0.2, p: 1, draws: 1 };
        let a = sim.predict(&[0.2, 0.2, 3.0], &mode, &[1.05, 5.0], 11).unwrap();
        let b = sim.predict(&[0.2, 0.2, 3.0], &mode, &[1.05, 5.0], 11).unwrap();
        let c = sim.predict(&[0.2, 0.2, 3.0], &mode, &[1.05, 5.0], 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
