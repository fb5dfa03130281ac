use rayon::prelude::*;
use serde::Serialize;

use super::quadrature::{gauss_legendre, integrate};
use super::{assemble_randomized, solve_quadratic, solve_system, EllipticProblem, FemSolution, Mesh1D, RandomBasisSpec};
use crate::convergence::OrderFit;
use crate::error::{invalid, Result};
use crate::rng::{derive_path, substream};
use crate::stats;

const POINTS: usize = 12;

/// Integrates over each element split into `pieces` equal parts.
fn integrate_mesh(mesh: &Mesh1D, pieces: usize, f: impl Fn(f64) -> f64) -> f64 {
    let rule = gauss_legendre(POINTS);
    let w = mesh.h() / pieces as f64;
    (0..mesh.n_elements() * pieces)
        .map(|i| integrate(&f, i as f64 * w, (i + 1) as f64 * w, &rule))
        .sum()
}

/// `sqrt(int kappa (u' - U')^2)`; `pieces` subdivides each element so the
/// reference is smooth on every quadrature cell.
pub fn energy_norm_error(sol: &FemSolution, problem: &EllipticProblem, reference: impl Fn(f64) -> f64, pieces: usize) -> f64 {
    integrate_mesh(&sol.mesh, pieces, |x| problem.kappa.at(x) * (reference(x) - sol.derivative(x)).powi(2)).sqrt()
}

/// `sqrt(int (u - U)^2)`.
pub fn l2_error(sol: &FemSolution, reference: impl Fn(f64) -> f64, pieces: usize) -> f64 {
    integrate_mesh(&sol.mesh, pieces, |x| (reference(x) - sol.eval(x)).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FemRates {
    pub energy: OrderFit,
    pub l2: OrderFit,
}

/// Mean energy and L2 errors of the (randomized) linear-element solution
/// against a quadratic-element reference on `reference_elements`, over
/// `samples` basis draws per mesh, with log-log fits in `h`.
pub fn estimate_fem_rates(
    problem: &EllipticProblem,
    spec: &RandomBasisSpec,
    n_elements: &[usize],
    samples: usize,
    reference_elements: usize,
    seed: u64,
) -> Result<FemRates> {
    spec.validate()?;
    if n_elements.len() < 2 || samples == 0 {
        return Err(invalid("need at least two meshes and one sample"));
    }
    let reference = solve_quadratic(&Mesh1D::new(reference_elements)?, problem)?;
    let samples = if spec.sigma == 0.0 { 1 } else { samples };
    let mut hs = Vec::new();
    let (mut energy, mut energy_se, mut l2, mut l2_se) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, &n) in n_elements.iter().enumerate() {
        let mesh = Mesh1D::new(n)?;
        if reference_elements % n != 0 {
            return Err(invalid(format!("reference mesh {reference_elements} does not refine {n}")));
        }
        let pieces = reference_elements / n;
        let errs: Vec<(f64, f64)> = (0..samples)
            .into_par_iter()
            .map(|r| {
                let sys = assemble_randomized(&mesh, problem, spec, derive_path(seed, &[i as u64, r as u64]))?;
                let sol = solve_system(&sys)?;
                Ok((
                    energy_norm_error(&sol, problem, |x| reference.derivative(x), pieces),
                    l2_error(&sol, |x| reference.eval(x), pieces),
                ))
            })
            .collect::<Result<_>>()?;
        let (e, l): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
        hs.push(mesh.h());
        energy.push(stats::mean(&e));
        l2.push(stats::mean(&l));
        energy_se.push(if samples > 1 { stats::std_error(&e) } else { 0.0 });
        l2_se.push(if samples > 1 { stats::std_error(&l) } else { 0.0 });
    }
    Ok(FemRates {
        energy: OrderFit::from_errors(hs.clone(), energy, energy_se)?,
        l2: OrderFit::from_errors(hs, l2, l2_se)?,
    })
}

/// Monte-Carlo mean of `sum_j |phi_j^r|_a^2` per mesh, with a log-log fit.
pub fn estimate_energy_scaling(
    problem: &EllipticProblem,
    spec: &RandomBasisSpec,
    n_elements: &[usize],
    samples: usize,
    seed: u64,
) -> Result<OrderFit> {
    spec.validate()?;
    let mut hs = Vec::new();
    let mut means = Vec::new();
    let mut ses = Vec::new();
    for (i, &n) in n_elements.iter().enumerate() {
        let mesh = Mesh1D::new(n)?;
        let sums: Vec<f64> = (0..samples)
            .map(|r| {
                let mut rng = substream(derive_path(seed, &[i as u64, r as u64]), 0);
                super::draw_random_basis(&mesh, spec, &mut rng).map(|b| b.energy_sum(&mesh, &problem.kappa))
            })
            .collect::<Result<_>>()?;
        hs.push(mesh.h());
        means.push(stats::mean(&sums));
        ses.push(stats::std_error(&sums));
    }
    OrderFit::from_errors(hs, means, ses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem1d::{assemble_deterministic, CoefficientField, ExactSolution};

    #[test]
    fn error_norms_vanish_for_exact_piecewise_linear() {
        let mesh = Mesh1D::new(10).unwrap();
        let p = EllipticProblem { kappa: CoefficientField::unit(), source: 0.0, right_value: 2.0 };
        let sol = solve_system(&assemble_deterministic(&mesh, &p)).unwrap();
        assert!(l2_error(&sol, |x| 2.0 * x, 1) < 1e-14);
        assert!(energy_norm_error(&sol, &p, |_| 2.0, 1) < 1e-13);
    }

    #[test]
    fn deterministic_rates_against_exact_solution() {
        let p = EllipticProblem::standard(CoefficientField::from_free(&[2.0, 0.5, 1.0, 1.5, 1.0, 3.0, 0.7, 1.0, 1.2]).unwrap());
        let exact = ExactSolution::new(&p);
        let mut e = Vec::new();
        let mut l = Vec::new();
        for n in [10, 20, 40, 80] {
            let sol = solve_system(&assemble_deterministic(&Mesh1D::new(n).unwrap(), &p)).unwrap();
            e.push(energy_norm_error(&sol, &p, |x| exact.derivative(x), 1));
            l.push(l2_error(&sol, |x| exact.eval(x), 1));
        }
        let hs = vec![0.1, 0.05, 0.025, 0.0125];
        let fe = OrderFit::from_errors(hs.clone(), e, vec![0.0; 4]).unwrap();
        let fl = OrderFit::from_errors(hs, l, vec![0.0; 4]).unwrap();
        assert!((fe.slope - 1.0).abs() < 0.05, "{}", fe.slope);
        assert!((fl.slope - 2.0).abs() < 0.05, "{}", fl.slope);
    }

    #[test]
    fn energy_sum_closed_form_mean() {
        let spec = RandomBasisSpec::new(2, 1.0, 5).unwrap();
        let p = EllipticProblem::standard(CoefficientField::unit());
        let fit = estimate_energy_scaling(&p, &spec, &[10, 20, 40, 80], 200, 4).unwrap();
        for (h, m) in fit.h_values.iter().zip(&fit.errors) {
            // two support elements per interior node, each sigma^2 h^(2p+1)
            let expect = 2.0 * (1.0 / h - 1.0) * h.powi(5);
            assert!((m / expect - 1.0).abs() < 0.05);
        }
        assert!((fit.slope - 4.0).abs() < 0.3);
    }
}
