use super::{
    assemble_deterministic, assemble_randomized, solve_quadratic, solve_system, CoefficientField, EllipticProblem, Mesh1D,
    RandomBasisSpec,
};
use crate::bayes::{Simulator, SolverMode};
use crate::calibration::CalibrationTarget;
use crate::error::{invalid, Result};

/// Calibration target comparing linear and quadratic elements on one mesh.
#[derive(Debug, Clone)]
pub struct FemCalibrationTarget {
    problem: EllipticProblem,
    mesh: Mesh1D,
    p: u32,
    n_kl: usize,
    locations: Vec<f64>,
    reference: Vec<f64>,
    indicator: Vec<f64>,
}

impl FemCalibrationTarget {
    /// Indicator `U_linear(x) - U_quadratic(x)` at `locations`.
    pub fn new(problem: EllipticProblem, n_elements: usize, p: u32, n_kl: usize, locations: Vec<f64>) -> Result<Self> {
        RandomBasisSpec::new(p, 0.0, n_kl)?;
        if locations.is_empty() || locations.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("calibration locations must lie in [0, 1]"));
        }
        let mesh = Mesh1D::new(n_elements)?;
        let linear = solve_system(&assemble_deterministic(&mesh, &problem))?;
        let quadratic = solve_quadratic(&mesh, &problem)?;
        let reference: Vec<f64> = locations.iter().map(|&x| linear.eval(x)).collect();
        let indicator = locations.iter().zip(&reference).map(|(&x, r)| r - quadratic.eval(x)).collect();
        Ok(Self { problem, mesh, p, n_kl, locations, reference, indicator })
    }
}

impl CalibrationTarget for FemCalibrationTarget {
    fn reference(&self) -> &[f64] {
        &self.reference
    }

    fn indicator(&self) -> &[f64] {
        &self.indicator
    }

    fn sample(&self, sigma: f64, seed: u64) -> Result<Vec<f64>> {
        let spec = RandomBasisSpec::new(self.p, sigma, self.n_kl)?;
        let sol = solve_system(&assemble_randomized(&self.mesh, &self.problem, &spec, seed)?)?;
        Ok(self.locations.iter().map(|&x| sol.eval(x)).collect())
    }
}

/// Forward model for the conductivity inverse problem: the parameters are
/// the nine free conductivity values.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSimulator {
    pub mesh: Mesh1D,
    pub n_kl: usize,
    pub source: f64,
    pub right_value: f64,
}

impl FemSimulator {
    pub fn standard(n_elements: usize, n_kl: usize) -> Result<Self> {
        Ok(Self { mesh: Mesh1D::new(n_elements)?, n_kl, source: 4.0, right_value: 2.0 })
    }
}

impl Simulator for FemSimulator {
    fn n_params(&self) -> usize {
        super::KAPPA_PIECES - 1
    }

    fn predict(&self, theta: &[f64], solver: &SolverMode, locations: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
        let problem = EllipticProblem {
            kappa: CoefficientField::from_free(theta)?,
            source: self.source,
            right_value: self.right_value,
        };
        let spec = match solver {
            SolverMode::Randomized { sigma, p, .. } => RandomBasisSpec::new(*p, *sigma, self.n_kl)?,
            SolverMode::Deterministic => RandomBasisSpec::deterministic(),
        };
        let sol = solve_system(&assemble_randomized(&self.mesh, &problem, &spec, seed)?)?;
        Ok(locations.iter().map(|&x| vec![sol.eval(x)]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem1d::ExactSolution;

    #[test]
    fn indicator_vanishes_at_nodes_not_between() {
        let p = EllipticProblem::standard(CoefficientField::from_free(&[2.0; 9]).unwrap());
        let t = FemCalibrationTarget::new(p, 10, 1, 5, vec![0.3, 0.35]).unwrap();
        assert!(t.indicator()[0].abs() < 1e-13);
        assert!(t.indicator()[1].abs() > 1e-6);
    }

    #[test]
    fn simulator_matches_exact_at_nodes() {
        let sim = FemSimulator::standard(20, 5).unwrap();
        let theta = [1.5, 0.8, 1.0, 2.0, 1.0, 0.5, 1.0, 1.3, 1.0];
        let pred = sim.predict(&theta, &SolverMode::Deterministic, &[0.1, 0.5, 0.9], 0).unwrap();
        let exact = ExactSolution::new(&EllipticProblem::standard(CoefficientField::from_free(&theta).unwrap()));
        for (x, u) in [0.1, 0.5, 0.9].iter().zip(&pred) {
            assert!((u[0] - exact.eval(*x)).abs() < 1e-12);
        }
        assert!(sim.predict(&theta[..8], &SolverMode::Deterministic, &[0.5], 0).is_err());
    }
}
