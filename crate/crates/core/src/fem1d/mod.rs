//! Piecewise-linear Galerkin finite elements for `(kappa u')' = f` on
//! `[0, 1]` with `f(x) = source * x`, `u(0) = 0` and `u(1) = right_value`,
//! in deterministic form and with randomized basis functions.
//!
//! A randomized basis function is the usual hat plus an independent
//! truncated Karhunen-Loeve Brownian bridge on each of its two support
//! elements. Bridges vanish at the nodes, so the nodal property and the
//! tridiagonal sparsity are preserved. All element integrals of the bridge
//! modes are evaluated in closed form.

mod banded;
mod quadrature;
mod rates;
mod reference;
mod targets;

pub use rates::{energy_norm_error, estimate_energy_scaling, estimate_fem_rates, l2_error, FemRates};
pub use reference::{solve_quadratic, ExactSolution, QuadraticSolution};
pub use targets::{FemCalibrationTarget, FemSimulator};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Result};
use crate::io::CsvTable;
use crate::rng::substream;
use banded::SymBanded;

/// Number of constant pieces of the conductivity.
pub const KAPPA_PIECES: usize = 10;

/// Uniform mesh of `[0, 1]` with `n_elements` elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mesh1D {
    n_elements: usize,
}

impl Mesh1D {
    /// `n_elements` must be a positive multiple of 10 so that element
    /// boundaries contain the conductivity breakpoints.
    pub fn new(n_elements: usize) -> Result<Self> {
        if n_elements == 0 || n_elements % KAPPA_PIECES != 0 {
            return Err(invalid(format!(
                "element count {n_elements} is not a positive multiple of {KAPPA_PIECES}"
            )));
        }
        Ok(Self { n_elements })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// Interior node count.
    pub fn n_interior(&self) -> usize {
        self.n_elements - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_elements as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }

    /// Element containing `x`, with `x = 1` assigned to the last element.
    pub fn element_of(&self, x: f64) -> usize {
        ((x * self.n_elements as f64).floor().max(0.0) as usize).min(self.n_elements - 1)
    }
}

/// Conductivity constant on ten equal intervals, equal to one on the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    values: [f64; KAPPA_PIECES],
}

impl CoefficientField {
    pub fn unit() -> Self {
        Self { values: [1.0; KAPPA_PIECES] }
    }

    /// Field with the nine free interval values `kappa_2..kappa_10`.
    pub fn from_free(free: &[f64]) -> Result<Self> {
        if free.len() != KAPPA_PIECES - 1 {
            return Err(invalid(format!("expected {} conductivity values, got {}", KAPPA_PIECES - 1, free.len())));
        }
        if free.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(invalid("conductivity must be positive and finite"));
        }
        let mut values = [1.0; KAPPA_PIECES];
        values[1..].copy_from_slice(free);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64; KAPPA_PIECES] {
        &self.values
    }

    pub fn free(&self) -> &[f64] {
        &self.values[1..]
    }

    pub fn at(&self, x: f64) -> f64 {
        self.values[((x * KAPPA_PIECES as f64).floor().max(0.0) as usize).min(KAPPA_PIECES - 1)]
    }

    /// Value on element `e` of `mesh`.
    pub fn on_element(&self, mesh: &Mesh1D, e: usize) -> f64 {
        self.values[e * KAPPA_PIECES / mesh.n_elements()]
    }
}

/// The boundary value problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticProblem {
    pub kappa: CoefficientField,
    /// Slope of the linear source term.
    pub source: f64,
    pub right_value: f64,
}

impl EllipticProblem {
    /// `(kappa u')' = 4x`, `u(0) = 0`, `u(1) = 2`.
    pub fn standard(kappa: CoefficientField) -> Self {
        Self { kappa, source: 4.0, right_value: 2.0 }
    }
}

/// Scale and truncation of the randomized basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomBasisSpec {
    pub p: u32,
    pub sigma: f64,
    #[serde(default = "default_n_kl")]
    pub n_kl: usize,
}

fn default_n_kl() -> usize {
    20
}

impl RandomBasisSpec {
    pub fn new(p: u32, sigma: f64, n_kl: usize) -> Result<Self> {
        let s = Self { p, sigma, n_kl };
        s.validate()?;
        Ok(s)
    }

    pub fn deterministic() -> Self {
        Self { p: 1, sigma: 0.0, n_kl: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_kl < 1 {
            return Err(invalid("Karhunen-Loeve truncation must be >= 1"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(invalid("basis noise scale must be finite and >= 0"));
        }
        if self.p < 1 {
            return Err(invalid("perturbation order must be >= 1"));
        }
        Ok(())
    }

    /// Bridge amplitude `sigma h^(p+1) / sqrt(n_kl)`.
    pub fn amplitude(&self, h: f64) -> f64 {
        self.sigma * h.powi(self.p as i32 + 1) / (self.n_kl as f64).sqrt()
    }
}

/// Bridge coefficients of every interior basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBasis {
    pub amplitude: f64,
    pub n_kl: usize,
    /// Coefficients of the bridge on the element left of node `j`,
    /// `n_kl` per interior node in node order.
    pub left: Vec<f64>,
    /// As `left`, for the element right of the node.
    pub right: Vec<f64>,
}

impl RandomBasis {
    fn left_of(&self, j: usize) -> &[f64] {
        &self.left[(j - 1) * self.n_kl..j * self.n_kl]
    }

    fn right_of(&self, j: usize) -> &[f64] {
        &self.right[(j - 1) * self.n_kl..j * self.n_kl]
    }

    fn bridge(&self, eta: &[f64], t: f64, h: f64) -> f64 {
        self.amplitude
            * eta
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let n = (i + 1) as f64;
                    SQRT_2 / (n * PI) * (n * PI * t / h).sin() * e
                })
                .sum::<f64>()
    }

    fn bridge_slope(&self, eta: &[f64], t: f64, h: f64) -> f64 {
        self.amplitude * SQRT_2 / h
            * eta
                .iter()
                .enumerate()
                .map(|(i, e)| ((i + 1) as f64 * PI * t / h).cos() * e)
                .sum::<f64>()
    }

    /// `int_0^h b'(t)^2 dt` for the bridge with coefficients `eta`.
    fn energy(&self, eta: &[f64], h: f64) -> f64 {
        self.amplitude.powi(2) / h * eta.iter().map(|e| e * e).sum::<f64>()
    }

    /// `int_0^h (x0 + t) b(t) dt`.
    fn first_moment(&self, eta: &[f64], x0: f64, h: f64) -> f64 {
        self.amplitude
            * eta
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let n = (i + 1) as f64;
                    let sign = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
                    let sin_int = h * (1.0 - sign) / (n * PI);
                    let t_sin_int = -h * h * sign / (n * PI);
                    SQRT_2 / (n * PI) * e * (x0 * sin_int + t_sin_int)
                })
                .sum::<f64>()
    }

    /// `sum_j |phi_j^r|_a^2`, the energy of all random basis parts.
    pub fn energy_sum(&self, mesh: &Mesh1D, kappa: &CoefficientField) -> f64 {
        let h = mesh.h();
        (1..=mesh.n_interior())
            .map(|j| {
                kappa.on_element(mesh, j - 1) * self.energy(self.left_of(j), h)
                    + kappa.on_element(mesh, j) * self.energy(self.right_of(j), h)
            })
            .sum()
    }
}

/// Draws the bridge coefficients: node by node, left bridge then right.
pub fn draw_random_basis<R: Rng + ?Sized>(mesh: &Mesh1D, spec: &RandomBasisSpec, rng: &mut R) -> Result<RandomBasis> {
    spec.validate()?;
    let n = mesh.n_interior() * spec.n_kl;
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for _ in 0..mesh.n_interior() {
        left.extend((0..spec.n_kl).map(|_| rng.sample::<f64, _>(StandardNormal)));
        right.extend((0..spec.n_kl).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }
    Ok(RandomBasis { amplitude: spec.amplitude(mesh.h()), n_kl: spec.n_kl, left, right })
}

/// Assembled Galerkin system `A U = r` over the interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fem1DSystem {
    pub mesh: Mesh1D,
    pub diag: Vec<f64>,
    /// `A[j][j+1]`.
    pub off: Vec<f64>,
    pub rhs: Vec<f64>,
    pub right_value: f64,
    pub basis: Option<RandomBasis>,
    /// Seed of the basis draw.
    pub seed: Option<u64>,
}

impl Fem1DSystem {
    /// JSON dump of the banded matrix and load.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_elements": self.mesh.n_elements(),
            "diag": self.diag,
            "off_diag": self.off,
            "rhs": self.rhs,
            "right_value": self.right_value,
            "seed": self.seed,
            "randomized": self.basis.is_some(),
        })
    }
}

/// Hat-function Galerkin system; loads by two-point Gauss quadrature.
pub fn assemble_deterministic(mesh: &Mesh1D, problem: &EllipticProblem) -> Fem1DSystem {
    let n = mesh.n_interior();
    let h = mesh.h();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut rhs = vec![0.0; n];
    let g = 0.5 / 3f64.sqrt();
    for e in 0..mesh.n_elements() {
        let k = problem.kappa.on_element(mesh, e) / h;
        let x0 = mesh.node(e);
        // local nodes e (left) and e + 1 (right); interior index is node - 1
        let mut load = [0.0; 2];
        for xi in [0.5 - g, 0.5 + g] {
            let f = problem.source * (x0 + xi * h);
            load[0] += 0.5 * h * f * (1.0 - xi);
            load[1] += 0.5 * h * f * xi;
        }
        if e >= 1 {
            diag[e - 1] += k;
            rhs[e - 1] -= load[0];
        }
        if e + 1 <= n {
            diag[e] += k;
            rhs[e] -= load[1];
        }
        if e >= 1 && e + 1 <= n {
            off[e - 1] -= k;
        }
        if e + 1 == mesh.n_elements() && n > 0 {
            rhs[n - 1] += problem.right_value * k;
        }
    }
    Fem1DSystem { mesh: *mesh, diag, off, rhs, right_value: problem.right_value, basis: None, seed: None }
}

/// Galerkin system for a randomized basis drawn from `substream(seed, 0)`.
/// With `sigma = 0` the result equals [`assemble_deterministic`] bitwise.
pub fn assemble_randomized(mesh: &Mesh1D, problem: &EllipticProblem, spec: &RandomBasisSpec, seed: u64) -> Result<Fem1DSystem> {
    spec.validate()?;
    let mut sys = assemble_deterministic(mesh, problem);
    if spec.sigma == 0.0 {
        return Ok(sys);
    }
    let basis = draw_random_basis(mesh, spec, &mut substream(seed, 0))?;
    let h = mesh.h();
    let n = mesh.n_interior();
    for j in 1..=n {
        let (kl, kr) = (problem.kappa.on_element(mesh, j - 1), problem.kappa.on_element(mesh, j));
        let (l, r) = (basis.left_of(j), basis.right_of(j));
        sys.diag[j - 1] += kl * basis.energy(l, h) + kr * basis.energy(r, h);
        sys.rhs[j - 1] -= problem.source * (basis.first_moment(l, mesh.node(j - 1), h) + basis.first_moment(r, mesh.node(j), h));
        if j < n {
            let cross: f64 = r.iter().zip(basis.left_of(j + 1)).map(|(a, b)| a * b).sum();
            sys.off[j - 1] += kr * basis.amplitude.powi(2) / h * cross;
        }
    }
    sys.basis = Some(basis);
    sys.seed = Some(seed);
    Ok(sys)
}

/// Galerkin solution: nodal values with boundary entries, and the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSolution {
    pub mesh: Mesh1D,
    /// Values at all `n_elements + 1` nodes.
    pub nodal: Vec<f64>,
    pub basis: Option<RandomBasis>,
}

/// Solves the system by banded LDL^T.
pub fn solve_system(system: &Fem1DSystem) -> Result<FemSolution> {
    let n = system.diag.len();
    let mut a = SymBanded::zeros(n, 1);
    a.bands[0].copy_from_slice(&system.diag);
    if n > 1 {
        a.bands[1].copy_from_slice(&system.off);
    }
    let interior = if n > 0 { a.solve(&system.rhs, system.seed)? } else { Vec::new() };
    let mut nodal = Vec::with_capacity(n + 2);
    nodal.push(0.0);
    nodal.extend(interior);
    nodal.push(system.right_value);
    Ok(FemSolution { mesh: system.mesh, nodal, basis: system.basis.clone() })
}

impl FemSolution {
    fn locate(&self, x: f64) -> (usize, f64) {
        let e = self.mesh.element_of(x);
        (e, x - self.mesh.node(e))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (e, t) = self.locate(x);
        let h = self.mesh.h();
        let mut u = self.nodal[e] * (1.0 - t / h) + self.nodal[e + 1] * t / h;
        if let Some(b) = &self.basis {
            if e >= 1 {
                u += self.nodal[e] * b.bridge(b.right_of(e), t, h);
            }
            if e + 1 <= self.mesh.n_interior() {
                u += self.nodal[e + 1] * b.bridge(b.left_of(e + 1), t, h);
            }
        }
        u
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (e, t) = self.locate(x);
        let h = self.mesh.h();
        let mut du = (self.nodal[e + 1] - self.nodal[e]) / h;
        if let Some(b) = &self.basis {
            if e >= 1 {
                du += self.nodal[e] * b.bridge_slope(b.right_of(e), t, h);
            }
            if e + 1 <= self.mesh.n_interior() {
                du += self.nodal[e + 1] * b.bridge_slope(b.left_of(e + 1), t, h);
            }
        }
        du
    }

    /// CSV `x,u` on `points`.
    pub fn to_csv(&self, points: &[f64]) -> CsvTable {
        let mut t = CsvTable::new(["x", "u"].map(String::from));
        for &x in points {
            t.push_floats(&[x, self.eval(x)]);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn unit_problem() -> EllipticProblem {
        EllipticProblem::standard(CoefficientField::unit())
    }

    fn analytic(x: f64) -> f64 {
        (2.0 * x.powi(3) + 4.0 * x) / 3.0
    }

    #[test]
    fn mesh_alignment() {
        assert!(Mesh1D::new(15).is_err());
        assert!(Mesh1D::new(0).is_err());
        let m = Mesh1D::new(20).unwrap();
        assert_eq!(m.n_interior(), 19);
        assert_eq!(m.element_of(1.0), 19);
    }

    #[test]
    fn coefficient_validation() {
        assert!(CoefficientField::from_free(&[1.0; 8]).is_err());
        assert!(CoefficientField::from_free(&[1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
        let k = CoefficientField::from_free(&[2.0; 9]).unwrap();
        assert_eq!(k.at(0.05), 1.0);
        assert_eq!(k.at(0.15), 2.0);
        assert_eq!(k.at(1.0), 2.0);
    }

    #[test]
    fn unit_stiffness_entries() {
        let m = Mesh1D::new(10).unwrap();
        let s = assemble_deterministic(&m, &unit_problem());
        assert!(s.diag.iter().all(|d| (d - 20.0).abs() < 1e-12));
        assert!(s.off.iter().all(|o| (o + 10.0).abs() < 1e-12));
    }

    #[test]
    fn unit_kappa_nodes_match_analytic() {
        for n in [10, 40] {
            let m = Mesh1D::new(n).unwrap();
            let sol = solve_system(&assemble_deterministic(&m, &unit_problem())).unwrap();
            for j in 0..=n {
                assert!((sol.nodal[j] - analytic(m.node(j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flux_continuous_without_source() {
        let mut free = [1.0; 9];
        for v in free.iter_mut().skip(4) {
            *v = 2.0;
        }
        let p = EllipticProblem { kappa: CoefficientField::from_free(&free).unwrap(), source: 0.0, right_value: 2.0 };
        let m = Mesh1D::new(20).unwrap();
        let sol = solve_system(&assemble_deterministic(&m, &p)).unwrap();
        let flux: Vec<f64> = (0..20).map(|e| {
            let x = (e as f64 + 0.5) * m.h();
            p.kappa.at(x) * sol.derivative(x)
        }).collect();
        for f in &flux {
            assert!((f - flux[0]).abs() < 1e-12);
        }
        assert!((flux[0] - 2.0 / (0.5 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_is_bitwise_deterministic() {
        let m = Mesh1D::new(30).unwrap();
        let p = EllipticProblem::standard(CoefficientField::from_free(&[1.5; 9]).unwrap());
        let det = assemble_deterministic(&m, &p);
        let rnd = assemble_randomized(&m, &p, &RandomBasisSpec::new(1, 0.0, 5).unwrap(), 3).unwrap();
        assert_eq!(det, rnd);
    }

    #[test]
    fn zero_sigma_field_vanishes() {
        let m = Mesh1D::new(10).unwrap();
        let b = draw_random_basis(&m, &RandomBasisSpec::new(1, 0.0, 4).unwrap(), &mut substream(0, 0)).unwrap();
        assert_eq!(b.amplitude, 0.0);
        assert_eq!(b.energy_sum(&m, &CoefficientField::unit()), 0.0);
    }

    #[test]
    fn randomized_matrix_keeps_symmetric_tridiagonal_pattern() {
        let m = Mesh1D::new(10).unwrap();
        let s = assemble_randomized(&m, &unit_problem(), &RandomBasisSpec::new(1, 1.0, 4).unwrap(), 5).unwrap();
        assert_eq!(s.diag.len(), 9);
        assert_eq!(s.off.len(), 8);
        assert!(s.basis.is_some());
    }

    #[test]
    fn randomized_evaluator_interpolates_nodes() {
        let m = Mesh1D::new(20).unwrap();
        let s = assemble_randomized(&m, &unit_problem(), &RandomBasisSpec::new(1, 2.0, 8).unwrap(), 9).unwrap();
        let sol = solve_system(&s).unwrap();
        for j in 0..=20 {
            assert!((sol.eval(m.node(j)) - sol.nodal[j]).abs() < 1e-13 * (1.0 + sol.nodal[j].abs()));
        }
    }

    /// Direct quadrature of `a(phi_j, phi_k)` and `-int f phi_j - a(lift, phi_j)`
    /// with the randomized basis, compared with the assembled system.
    #[test]
    fn randomized_entries_match_quadrature() {
        let m = Mesh1D::new(10).unwrap();
        let p = EllipticProblem::standard(CoefficientField::from_free(&[0.5, 1.0, 2.0, 1.5, 0.7, 1.0, 3.0, 1.0, 0.9]).unwrap());
        let spec = RandomBasisSpec::new(1, 3.0, 6).unwrap();
        let s = assemble_randomized(&m, &p, &spec, 17).unwrap();
        let b = s.basis.clone().unwrap();
        let h = m.h();
        let rule = quadrature::gauss_legendre(40);
        let phi = |j: usize, x: f64| -> (f64, f64) {
            let xj = m.node(j);
            if x < xj - h || x > xj + h {
                return (0.0, 0.0);
            }
            if x <= xj {
                let t = x - (xj - h);
                (t / h + b.bridge(b.left_of(j), t, h), 1.0 / h + b.bridge_slope(b.left_of(j), t, h))
            } else {
                let t = x - xj;
                (1.0 - t / h + b.bridge(b.right_of(j), t, h), -1.0 / h + b.bridge_slope(b.right_of(j), t, h))
            }
        };
        let over = |f: &dyn Fn(f64) -> f64| -> f64 {
            (0..10).map(|e| quadrature::integrate(f, m.node(e), m.node(e + 1), &rule)).sum()
        };
        for j in 1..=9 {
            let ajj = over(&|x| p.kappa.at(x) * phi(j, x).1.powi(2));
            assert!((ajj - s.diag[j - 1]).abs() < 1e-10 * ajj.abs());
            if j < 9 {
                let ajk = over(&|x| p.kappa.at(x) * phi(j, x).1 * phi(j + 1, x).1);
                assert!((ajk - s.off[j - 1]).abs() < 1e-10 * ajk.abs().max(1.0));
            }
            let mut rj = -over(&|x| 4.0 * x * phi(j, x).0);
            if j == 9 {
                rj -= over(&|x| if x >= 0.9 { p.kappa.at(x) * 2.0 / h * phi(j, x).1 } else { 0.0 });
            }
            assert!((rj - s.rhs[j - 1]).abs() < 1e-10 * rj.abs().max(1.0), "j={j} {rj} {}", s.rhs[j - 1]);
        }
    }

    #[test]
    fn mean_stiffness_matches_closed_form() {
        let m = Mesh1D::new(10).unwrap();
        let p = unit_problem();
        let spec = RandomBasisSpec::new(1, 5.0, 4).unwrap();
        let det = assemble_deterministic(&m, &p);
        let draws: Vec<Fem1DSystem> = (0..1000).map(|s| assemble_randomized(&m, &p, &spec, s).unwrap()).collect();
        // each support element adds kappa a^2 n_kl / h in expectation
        let a = spec.amplitude(m.h());
        let shift = 2.0 * a * a * spec.n_kl as f64 / m.h();
        for j in 0..9 {
            let d: Vec<f64> = draws.iter().map(|s| s.diag[j]).collect();
            assert!((stats::mean(&d) - det.diag[j] - shift).abs() < 3.0 * stats::std_error(&d));
            if j < 8 {
                let o: Vec<f64> = draws.iter().map(|s| s.off[j]).collect();
                assert!((stats::mean(&o) - det.off[j]).abs() < 3.0 * stats::std_error(&o));
            }
        }
    }

    #[test]
    fn system_dump_and_csv() {
        let m = Mesh1D::new(10).unwrap();
        let s = assemble_deterministic(&m, &unit_problem());
        let j = s.to_json();
        assert_eq!(j["diag"].as_array().unwrap().len(), 9);
        let sol = solve_system(&s).unwrap();
        let csv = sol.to_csv(&[0.0, 0.5, 1.0]).to_csv_string();
        assert!(csv.starts_with("x,u\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
