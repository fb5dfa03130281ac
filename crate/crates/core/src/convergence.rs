//! Empirical convergence orders.
//!
//! Strong order is measured by Monte Carlo against a fine deterministic RK4
//! reference. Weak order is measured exactly for scalar linear problems,
//! where the randomized Euler recursion, the modified SDE and the original
//! ODE all have closed-form first and second moments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::CsvTable;
use crate::ode::{self, OdeProblem, OneStepMethod, VectorField};
use crate::perturbation::PerturbationSpec;
use crate::rng::derive_path;
use crate::stats;

/// Ordinary least squares of `ln err` on `ln h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_loglog(hs: &[f64], errs: &[f64]) -> Result<LogLogFit> {
    if hs.len() != errs.len() {
        return Err(invalid("step sizes and errors differ in length"));
    }
    if hs.len() < 2 {
        return Err(invalid("need at least two points to fit a slope"));
    }
    if hs.iter().chain(errs).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid("log-log fit needs positive finite entries"));
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (stats::mean(&xs), stats::mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("step sizes must not all be equal"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit { slope, intercept, r_squared })
}

/// Error statistics over a ladder of step sizes and their fitted rate.
///
/// When every error is exactly zero the slope is `+inf` (the method is
/// exact on the problem) and the intercept and `r_squared` are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub h_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl OrderFit {
    pub fn from_errors(h_values: Vec<f64>, errors: Vec<f64>, std_errors: Vec<f64>) -> Result<Self> {
        let positive: Vec<(f64, f64)> = h_values
            .iter()
            .zip(&errors)
            .filter(|(_, e)| **e > 0.0)
            .map(|(h, e)| (*h, *e))
            .collect();
        let fit = if positive.len() < 2 {
            LogLogFit { slope: f64::INFINITY, intercept: f64::NAN, r_squared: f64::NAN }
        } else {
            let (hs, es): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
            fit_loglog(&hs, &es)?
        };
        Ok(Self {
            h_values,
            errors,
            std_errors,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.slope == f64::INFINITY
    }

    /// CSV `h,error,stderr`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["h", "error", "stderr"]);
        for ((h, e), s) in self.h_values.iter().zip(&self.errors).zip(&self.std_errors) {
            t.push_floats(&[*h, *e, *s]);
        }
        t
    }

    /// JSON summary `{slope, intercept, r2}`; non-finite values become null.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "slope": finite_or_null(self.slope),
            "intercept": finite_or_null(self.intercept),
            "r2": finite_or_null(self.r_squared),
        })
    }
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::Value::Null
    }
}

/// Deterministic RK4 solution on the mesh of step `h_ref`.
pub fn reference_solution<F: VectorField + ?Sized>(
    problem: &OdeProblem<&F>,
    h_ref: f64,
) -> Result<Vec<Vec<f64>>> {
    Ok(ode::solve_deterministic(problem, &OneStepMethod::Rk4, h_ref)?
        .states()
        .to_vec())
}

fn check_ladder(h_values: &[f64]) -> Result<()> {
    if h_values.len() < 3 {
        return Err(invalid("an order study needs at least three step sizes"));
    }
    if h_values.iter().any(|h| !(*h > 0.0)) {
        return Err(invalid("step sizes must be positive"));
    }
    Ok(())
}

/// Root-mean-square sup-over-mesh error `sqrt(E max_k |u(t_k) - U_k|^2)` for
/// each step size, against RK4 at `min(h) / 20`, with its log-log slope.
///
/// Replicate `r` at ladder index `i` uses seed `derive_path(seed, [i, r])`.
pub fn estimate_strong_order<F: VectorField + ?Sized>(
    problem: &OdeProblem<&F>,
    method: &OneStepMethod,
    spec: &PerturbationSpec,
    h_values: &[f64],
    samples: usize,
    seed: u64,
) -> Result<OrderFit> {
    check_ladder(h_values)?;
    if samples < 50 {
        return Err(invalid(format!("need at least 50 samples per step size, got {samples}")));
    }
    for &h in h_values {
        problem.steps(h)?;
    }
    let h_min = h_values.iter().copied().fold(f64::INFINITY, f64::min);
    let h_ref = h_min / 20.0;
    let reference = reference_solution(problem, h_ref)?;

    let mut errors = Vec::with_capacity(h_values.len());
    let mut std_errors = Vec::with_capacity(h_values.len());
    for (i, &h) in h_values.iter().enumerate() {
        let ratio = h / h_ref;
        let stride = ratio.round() as usize;
        if (ratio - stride as f64).abs() > 1e-6 {
            return Err(invalid(format!("step {h} is not a multiple of the reference step {h_ref}")));
        }
        let sq: Vec<f64> = (0..samples)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let traj = ode::solve_mesh(problem, method, spec, h, derive_path(seed, &[i as u64, r as u64]))?;
                Ok(traj
                    .states()
                    .iter()
                    .enumerate()
                    .map(|(k, u)| sq_dist(u, &reference[k * stride]))
                    .fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?;
        let ms = stats::mean(&sq);
        let rms = ms.sqrt();
        errors.push(rms);
        std_errors.push(if rms > 0.0 { stats::std_error(&sq) / (2.0 * rms) } else { 0.0 });
    }
    OrderFit::from_errors(h_values.to_vec(), errors, std_errors)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Mean and variance of the randomized Euler iterate `U_k` for
/// `du/dt = rate u`, by the one-step moment recursion.
pub fn euler_linear_moments(rate: f64, u0: f64, h: f64, k: usize, spec: &PerturbationSpec) -> (f64, f64) {
    let g = 1.0 + h * rate;
    let q = spec.end_variance(h);
    let mut mean = u0;
    let mut var = 0.0;
    for _ in 0..k {
        mean *= g;
        var = g * g * var + q;
    }
    (mean, var)
}

/// `E|u(T) - U_K|^2` for randomized Euler on `du/dt = rate u`.
pub fn linear_euler_terminal_mse(
    rate: f64,
    u0: f64,
    t_final: f64,
    h: f64,
    spec: &PerturbationSpec,
) -> Result<f64> {
    let k = ode::mesh_steps(t_final, h)?;
    let (mean, var) = euler_linear_moments(rate, u0, h, k, spec);
    Ok((u0 * (rate * t_final).exp() - mean).powi(2) + var)
}

/// Test functional for weak errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Identity,
    Square,
}

impl Observable {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "identity" | "u" => Ok(Observable::Identity),
            "square" | "u2" => Ok(Observable::Square),
            other => Err(Error::Unsupported(format!(
                "observable '{other}': only identity and square have closed forms"
            ))),
        }
    }

    /// `E phi(X)` for `X ~ N(mean, var)`.
    fn gaussian_expectation(self, mean: f64, var: f64) -> f64 {
        match self {
            Observable::Identity => mean,
            Observable::Square => mean * mean + var,
        }
    }
}

/// Linear modified SDE `du = drift u dt + diffusion dW` of randomized
/// Euler on `du/dt = rate u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModifiedSde {
    pub drift: f64,
    pub diffusion: f64,
}

impl ModifiedSde {
    /// Drift `f - (h/2) f'f + (h^2/12)(f''f^2 + 4 f'^2 f)` at `f(u) = rate u`,
    /// i.e. `rate - h rate^2 / 2 + h^2 rate^3 / 3`, and diffusion `sigma h^p`.
    pub fn euler_linear(rate: f64, h: f64, spec: &PerturbationSpec) -> Self {
        Self {
            drift: rate - h * rate * rate / 2.0 + h * h * rate.powi(3) / 3.0,
            diffusion: spec.sigma() * h.powi(spec.p() as i32),
        }
    }

    /// Mean and variance of `u(t)` started from the point `u0`.
    pub fn moments(&self, u0: f64, t: f64) -> (f64, f64) {
        let a = self.drift;
        let mean = u0 * (a * t).exp();
        // (e^{2at} - 1) / (2a), continuous at a = 0
        let growth = if a == 0.0 { t } else { (2.0 * a * t).exp_m1() / (2.0 * a) };
        (mean, self.diffusion * self.diffusion * growth)
    }
}

/// Exact weak quantities for randomized Euler on a scalar linear problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakErrors {
    /// `E^h phi(U_K)`.
    pub numerical: f64,
    /// `E phi(u~(T))` for the modified SDE.
    pub modified_sde: f64,
    /// `phi(u(T))` for the original ODE.
    pub original_ode: f64,
}

impl WeakErrors {
    pub fn vs_modified(&self) -> f64 {
        (self.numerical - self.modified_sde).abs()
    }

    pub fn vs_original(&self) -> f64 {
        (self.numerical - self.original_ode).abs()
    }
}

pub fn weak_error_linear(
    rate: f64,
    u0: f64,
    t_final: f64,
    h: f64,
    spec: &PerturbationSpec,
    observable: Observable,
) -> Result<WeakErrors> {
    let k = ode::mesh_steps(t_final, h)?;
    let (m, v) = euler_linear_moments(rate, u0, h, k, spec);
    let (ms, vs) = ModifiedSde::euler_linear(rate, h, spec).moments(u0, t_final);
    let exact = u0 * (rate * t_final).exp();
    Ok(WeakErrors {
        numerical: observable.gaussian_expectation(m, v),
        modified_sde: observable.gaussian_expectation(ms, vs),
        original_ode: observable.gaussian_expectation(exact, 0.0),
    })
}

/// Weak-order fits over a ladder: `(vs modified SDE, vs original ODE)`.
pub fn weak_order_linear(
    rate: f64,
    u0: f64,
    t_final: f64,
    spec: &PerturbationSpec,
    h_values: &[f64],
    observable: Observable,
) -> Result<(OrderFit, OrderFit, Vec<WeakErrors>)> {
    check_ladder(h_values)?;
    let rows: Vec<WeakErrors> = h_values
        .iter()
        .map(|&h| weak_error_linear(rate, u0, t_final, h, spec, observable))
        .collect::<Result<_>>()?;
    let zeros = vec![0.0; h_values.len()];
    let vs_mod = OrderFit::from_errors(
        h_values.to_vec(),
        rows.iter().map(WeakErrors::vs_modified).collect(),
        zeros.clone(),
    )?;
    let vs_orig = OrderFit::from_errors(
        h_values.to_vec(),
        rows.iter().map(WeakErrors::vs_original).collect(),
        zeros,
    )?;
    Ok((vs_mod, vs_orig, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::LinearField;

    const LADDER: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

    #[test]
    fn exact_power_laws() {
        let hs = [0.1, 0.05, 0.025];
        let f = fit_loglog(&hs, &hs).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        let sq: Vec<f64> = hs.iter().map(|h| h * h).collect();
        assert!((fit_loglog(&hs, &sq).unwrap().slope - 2.0).abs() < 1e-12);
        let p: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powf(1.5)).collect();
        let f = fit_loglog(&hs, &p).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-12);
        assert!((f.intercept - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_loglog(&[0.1], &[0.1]).is_err());
        assert!(fit_loglog(&[0.1, 0.2], &[0.0, 0.1]).is_err());
        assert!(fit_loglog(&[0.1, -0.2], &[0.1, 0.1]).is_err());
        assert!(fit_loglog(&[0.1, 0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn all_zero_errors_give_infinite_order() {
        let f = OrderFit::from_errors(vec![0.1, 0.05, 0.025], vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert!(f.is_exact());
        assert_eq!(f.summary()["slope"], serde_json::Value::Null);
    }

    #[test]
    fn exact_method_gives_sentinel_not_error() {
        // f = 0 is solved exactly by every method.
        let field = crate::ode::FnField::new(1, |_: &[f64], du: &mut [f64]| du[0] = 0.0);
        let p = OdeProblem::new(&field, vec![1.0], 1.0).unwrap();
        let spec = PerturbationSpec::zero(1);
        let fit = estimate_strong_order(&p, &OneStepMethod::Euler, &spec, &LADDER, 50, 0).unwrap();
        assert!(fit.is_exact());
    }

    #[test]
    fn deterministic_euler_is_first_order() {
        let field = LinearField::scalar(1.0);
        let p = OdeProblem::new(&field, vec![1.0], 1.0).unwrap();
        let spec = PerturbationSpec::zero(1);
        let fit = estimate_strong_order(&p, &OneStepMethod::Euler, &spec, &LADDER, 50, 0).unwrap();
        assert!((0.9..=1.1).contains(&fit.slope), "{}", fit.slope);
    }

    #[test]
    fn randomized_euler_strong_order_one() {
        let field = LinearField::scalar(1.0);
        let p = OdeProblem::new(&field, vec![1.0], 1.0).unwrap();
        let spec = PerturbationSpec::new(1, 1.0, 1).unwrap();
        let fit = estimate_strong_order(&p, &OneStepMethod::Euler, &spec, &LADDER, 200, 7).unwrap();
        assert!((0.85..=1.15).contains(&fit.slope), "{}", fit.slope);
    }

    #[test]
    fn randomized_rk4_strong_order_four() {
        let field = LinearField::scalar(1.0);
        let p = OdeProblem::new(&field, vec![1.0], 1.0).unwrap();
        let spec = PerturbationSpec::new(4, 1.0, 1).unwrap();
        let fit = estimate_strong_order(&p, &OneStepMethod::Rk4, &spec, &LADDER, 200, 7).unwrap();
        assert!((3.5..=4.5).contains(&fit.slope), "{}", fit.slope);
    }

    #[test]
    fn strong_study_preconditions() {
        let field = LinearField::scalar(1.0);
        let p = OdeProblem::new(&field, vec![1.0], 1.0).unwrap();
        let spec = PerturbationSpec::new(1, 1.0, 1).unwrap();
        assert!(estimate_strong_order(&p, &OneStepMethod::Euler, &spec, &LADDER, 10, 0).is_err());
        assert!(estimate_strong_order(&p, &OneStepMethod::Euler, &spec, &[0.1, 0.05], 50, 0).is_err());
        assert!(estimate_strong_order(&p, &OneStepMethod::Euler, &spec, &[0.3, 0.1, 0.05], 50, 0).is_err());
    }

    #[test]
    fn moment_recursion_matches_geometric_sum() {
        let spec = PerturbationSpec::new(1, 0.2, 1).unwrap();
        let (h, rate, k) = (0.1, 1.0, 10);
        let (m, v) = euler_linear_moments(rate, 1.0, h, k, &spec);
        let g: f64 = 1.0 + h * rate;
        let sum: f64 = (0..k).map(|j| g.powi(2 * (k - j - 1) as i32)).sum();
        assert!((m - g.powi(k as i32)).abs() < 1e-14);
        assert!((v - 0.04 * 1e-3 * sum).abs() < 1e-16);
    }

    #[test]
    fn zero_noise_identity_weak_gap_is_classical() {
        let spec = PerturbationSpec::zero(1);
        let w = weak_error_linear(1.0, 1.0, 1.0, 0.1, &spec, Observable::Identity).unwrap();
        assert!((w.numerical - 1.1f64.powi(10)).abs() < 1e-14);
        assert!((w.original_ode - 1.0f64.exp()).abs() < 1e-15);
        let (_, orig, _) =
            weak_order_linear(1.0, 1.0, 1.0, &spec, &LADDER, Observable::Identity).unwrap();
        assert!((0.9..1.1).contains(&orig.slope));
    }

    #[test]
    fn modified_sde_reduces_to_ode_drift() {
        let spec = PerturbationSpec::new(1, 0.5, 1).unwrap();
        let m = ModifiedSde::euler_linear(1.3, 1e-9, &spec);
        assert!((m.drift - 1.3).abs() < 1e-8);
        let (mean, var) = ModifiedSde { drift: 0.0, diffusion: 2.0 }.moments(1.0, 3.0);
        assert_eq!((mean, var), (1.0, 12.0));
    }

    #[test]
    fn weak_orders_for_linear_problem() {
        let spec = PerturbationSpec::new(1, 1.0, 1).unwrap();
        for obs in [Observable::Identity, Observable::Square] {
            let (vs_mod, vs_orig, rows) =
                weak_order_linear(1.0, 1.0, 1.0, &spec, &LADDER, obs).unwrap();
            assert!((2.6..=3.4).contains(&vs_mod.slope), "{obs:?} {}", vs_mod.slope);
            assert!((0.8..=1.2).contains(&vs_orig.slope), "{obs:?} {}", vs_orig.slope);
            for r in rows {
                assert!(r.vs_modified() < r.vs_original());
            }
        }
    }

    #[test]
    fn unknown_observable_is_unsupported() {
        assert!(matches!(Observable::from_name("cube"), Err(Error::Unsupported(_))));
        assert_eq!(Observable::from_name("square").unwrap(), Observable::Square);
    }
}
