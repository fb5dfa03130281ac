use super::banded::SymBanded;
use super::{EllipticProblem, Mesh1D, KAPPA_PIECES};
use crate::error::Result;

/// Piecewise-quadratic Galerkin solution, stored at vertices and midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSolution {
    pub mesh: Mesh1D,
    /// Values at `x = i h / 2`, `i = 0..=2 n_elements`.
    pub values: Vec<f64>,
}

const STIFFNESS: [[f64; 3]; 3] = [[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]];

fn shape(xi: f64) -> [f64; 3] {
    [(1.0 - xi) * (1.0 - 2.0 * xi), 4.0 * xi * (1.0 - xi), xi * (2.0 * xi - 1.0)]
}

fn shape_slope(xi: f64) -> [f64; 3] {
    [4.0 * xi - 3.0, 4.0 - 8.0 * xi, 4.0 * xi - 1.0]
}

/// Quadratic-element solution on `mesh`; loads by three-point Gauss
/// quadrature, exact for the linear source.
pub fn solve_quadratic(mesh: &Mesh1D, problem: &EllipticProblem) -> Result<QuadraticSolution> {
    let ne = mesh.n_elements();
    let h = mesh.h();
    let n = 2 * ne - 1;
    let mut a = SymBanded::zeros(n, 2);
    let mut rhs = vec![0.0; n];
    let gx = [0.5 - 0.5 * 0.6f64.sqrt(), 0.5, 0.5 + 0.5 * 0.6f64.sqrt()];
    let gw = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    for e in 0..ne {
        let k = problem.kappa.on_element(mesh, e) / (3.0 * h);
        let mut load = [0.0; 3];
        for (xi, w) in gx.iter().zip(gw) {
            let f = problem.source * (mesh.node(e) + xi * h);
            for (l, s) in load.iter_mut().zip(shape(*xi)) {
                *l += w * h * f * s;
            }
        }
        // global node 2e + i, unknown index 2e + i - 1
        for i in 0..3 {
            let gi = 2 * e + i;
            if gi == 0 || gi == 2 * ne {
                continue;
            }
            rhs[gi - 1] -= load[i];
            for j in 0..3 {
                let gj = 2 * e + j;
                if gj == 2 * ne {
                    rhs[gi - 1] -= k * STIFFNESS[i][j] * problem.right_value;
                } else if gj >= gi {
                    a.add(gi - 1, gj - 1, k * STIFFNESS[i][j]);
                }
            }
        }
    }
    let interior = a.solve(&rhs, None)?;
    let mut values = Vec::with_capacity(2 * ne + 1);
    values.push(0.0);
    values.extend(interior);
    values.push(problem.right_value);
    Ok(QuadraticSolution { mesh: *mesh, values })
}

impl QuadraticSolution {
    fn locate(&self, x: f64) -> (usize, f64) {
        let e = self.mesh.element_of(x);
        (e, (x - self.mesh.node(e)) / self.mesh.h())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (e, xi) = self.locate(x);
        shape(xi).iter().enumerate().map(|(i, s)| s * self.values[2 * e + i]).sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (e, xi) = self.locate(x);
        shape_slope(xi).iter().enumerate().map(|(i, s)| s * self.values[2 * e + i]).sum::<f64>() / self.mesh.h()
    }
}

/// Exact solution for piecewise-constant conductivity:
/// `kappa u' = source x^2 / 2 + flux`, with `flux` fixed by `u(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    problem: EllipticProblem,
    flux: f64,
}

impl ExactSolution {
    pub fn new(problem: &EllipticProblem) -> Self {
        let mut cubic = 0.0;
        let mut linear = 0.0;
        for (i, k) in problem.kappa.values().iter().enumerate() {
            let (a, b) = (i as f64 / KAPPA_PIECES as f64, (i + 1) as f64 / KAPPA_PIECES as f64);
            cubic += problem.source / 6.0 * (b.powi(3) - a.powi(3)) / k;
            linear += (b - a) / k;
        }
        Self { problem: problem.clone(), flux: (problem.right_value - cubic) / linear }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut u = 0.0;
        for (i, k) in self.problem.kappa.values().iter().enumerate() {
            let a = i as f64 / KAPPA_PIECES as f64;
            if a >= x {
                break;
            }
            let b = ((i + 1) as f64 / KAPPA_PIECES as f64).min(x);
            u += (self.problem.source / 6.0 * (b.powi(3) - a.powi(3)) + self.flux * (b - a)) / k;
        }
        u
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.problem.source / 2.0 * x * x + self.flux) / self.problem.kappa.at(x)
    }
}
