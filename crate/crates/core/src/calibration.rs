//! Empirical-Bayes choice of the noise scale `sigma`.
//!
//! At each mesh point the randomized solver's marginal is approximated by a
//! Gaussian (Monte-Carlo mean and variance) and compared to the Gaussian
//! centred on the deterministic solution with the squared error indicator as
//! variance. The log-density `log pi(sigma)` is minus the summed
//! Bhattacharyya distance; the calibrated scale is its maximiser.
//!
//! Monte-Carlo draws use common random numbers: replicate `r` always uses
//! the same seed, whatever `sigma` is, so `log pi` is a smooth deterministic
//! function of `(sigma, seed)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::CsvTable;
use crate::ode::{self, OdeProblem, OneStepMethod, VectorField};
use crate::perturbation::PerturbationSpec;
use crate::rng::derive_path;
use crate::stats;

/// Error indicator `E(t_k)` per state component on the mesh of step `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorIndicatorSeries {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// `E(t_k) = U^{h,0}(t_k) - U^{2h,0}(t_k)`, with the coarse solution
/// evaluated between its mesh points by the deterministic interpolant
/// `Psi_tau`.
pub fn error_indicator_step_halving<F: VectorField + ?Sized>(
    problem: &OdeProblem<&F>,
    method: &OneStepMethod,
    h: f64,
) -> Result<ErrorIndicatorSeries> {
    let fine = ode::solve_deterministic(problem, method, h)?;
    let coarse = ode::solve_deterministic(problem, method, 2.0 * h)?;
    let values = fine
        .states()
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let base = &coarse.states()[k / 2];
            let c = if k % 2 == 0 {
                base.clone()
            } else {
                method.advance(problem.field, base, h)
            };
            u.iter().zip(&c).map(|(a, b)| a - b).collect()
        })
        .collect();
    Ok(ErrorIndicatorSeries { times: fine.times().to_vec(), values })
}

/// Bhattacharyya distance between `N(m1, v1)` and `N(m2, v2)`.
pub fn bhattacharyya_gaussian(m1: f64, v1: f64, m2: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(invalid(format!("variances must be positive, got {v1} and {v2}")));
    }
    let s = v1 + v2;
    Ok(0.25 * (m1 - m2).powi(2) / s + 0.5 * (s / (2.0 * (v1 * v2).sqrt())).ln())
}

/// Sum of per-component distances between diagonal Gaussians.
pub fn bhattacharyya_diagonal(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> Result<f64> {
    let n = m1.len();
    if v1.len() != n || m2.len() != n || v2.len() != n {
        return Err(invalid("mismatched dimensions"));
    }
    (0..n).map(|i| bhattacharyya_gaussian(m1[i], v1[i], m2[i], v2[i])).sum()
}

/// A randomized solver paired with its deterministic solution and error
/// indicator, all flattened to the same list of scalar entries.
pub trait CalibrationTarget: Sync {
    fn reference(&self) -> &[f64];

    fn indicator(&self) -> &[f64];

    /// One randomized realization at scale `sigma`, driven by `seed`.
    fn sample(&self, sigma: f64, seed: u64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Monte-Carlo draws per `log pi` evaluation.
    pub n_mc: usize,
    pub seed: u64,
    /// Indicator variances are floored at `(floor_scale (1 + |U_k|))^2`.
    pub floor_scale: f64,
    /// Golden-section rounds after the grid scan.
    pub refine_rounds: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { n_mc: 200, seed: 0, floor_scale: 1e-12, refine_rounds: 3 }
    }
}

/// MAP noise scale and the evaluated `log pi` profile, sorted by `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub sigma_star: f64,
    pub profile: Vec<(f64, f64)>,
    pub mc_samples: usize,
    pub seed: u64,
}

impl CalibrationResult {
    /// CSV `sigma,log_pi`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["sigma", "log_pi"]);
        for (s, l) in &self.profile {
            t.push_floats(&[*s, *l]);
        }
        t
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({ "sigma_star": self.sigma_star, "n_mc": self.mc_samples, "seed": self.seed })
    }
}

/// `log pi(sigma)` for one target: minus the summed Bhattacharyya distance
/// between the Monte-Carlo Gaussian of the randomized solver and
/// `N(reference, max(E^2, floor^2))` at every entry.
fn log_pi_single<T: CalibrationTarget>(
    target: &T,
    index: u64,
    sigma: f64,
    opts: &CalibrationOptions,
) -> Result<f64> {
    let reference = target.reference();
    let indicator = target.indicator();
    if reference.len() != indicator.len() {
        return Err(invalid("reference and indicator lengths differ"));
    }
    let draws: Vec<Vec<f64>> = (0..opts.n_mc)
        .into_par_iter()
        .map(|r| target.sample(sigma, derive_path(opts.seed, &[index, r as u64])))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut column = vec![0.0; draws.len()];
    for (j, (&u_det, &e)) in reference.iter().zip(indicator).enumerate() {
        for (c, d) in column.iter_mut().zip(&draws) {
            *c = d[j];
        }
        let floor = opts.floor_scale * (1.0 + u_det.abs());
        let v_ind = (e * e).max(floor * floor);
        if !(v_ind > 0.0) {
            return Err(invalid(format!(
                "indicator variance is zero at entry {j}; use a positive floor"
            )));
        }
        let v_mc = stats::variance(&column);
        if !(v_mc > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        total += bhattacharyya_gaussian(stats::mean(&column), v_mc, u_det, v_ind)?;
    }
    Ok(-total)
}

/// `log pi(sigma)`, averaged on the density scale over `targets` (one
/// target per prior draw when input parameters are marginalised out).
pub fn log_pi<T: CalibrationTarget>(targets: &[T], sigma: f64, opts: &CalibrationOptions) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if opts.n_mc < 2 {
        return Err(invalid("need at least two Monte-Carlo draws"));
    }
    if targets.is_empty() {
        return Err(invalid("no calibration targets"));
    }
    let per: Vec<f64> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| log_pi_single(t, i as u64, sigma, opts))
        .collect::<Result<_>>()?;
    Ok(stats::log_mean_exp(&per))
}

/// Grid scan of `log pi` followed by golden-section refinement in
/// `log sigma` around the best grid point.
pub fn calibrate<T: CalibrationTarget>(
    targets: &[T],
    sigma_grid: &[f64],
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    if sigma_grid.is_empty() {
        return Err(invalid("sigma grid is empty"));
    }
    if sigma_grid.iter().any(|s| !(*s > 0.0)) || sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("sigma grid must be positive and strictly increasing"));
    }
    let mut profile: Vec<(f64, f64)> = sigma_grid
        .iter()
        .map(|&s| Ok((s, log_pi(targets, s, opts)?)))
        .collect::<Result<_>>()?;
    let best = argmax(&profile);
    if sigma_grid.len() >= 2 && opts.refine_rounds > 0 {
        let lo = sigma_grid[best.saturating_sub(1)].ln();
        let hi = sigma_grid[(best + 1).min(sigma_grid.len() - 1)].ln();
        let mut eval = |x: f64| -> Result<f64> {
            let s = x.exp();
            let v = log_pi(targets, s, opts)?;
            profile.push((s, v));
            Ok(v)
        };
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = eval(c)?;
        let mut fd = eval(d)?;
        for _ in 0..opts.refine_rounds {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = eval(d)?;
            }
        }
    }
    profile.sort_by(|x, y| x.0.total_cmp(&y.0));
    let sigma_star = profile[argmax(&profile)].0;
    Ok(CalibrationResult { sigma_star, profile, mc_samples: opts.n_mc, seed: opts.seed })
}

fn argmax(profile: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, (_, v)) in profile.iter().enumerate() {
        if *v > profile[best].1 {
            best = i;
        }
    }
    best
}

/// Randomized ODE solver on a fixed mesh as a calibration target. Entries
/// are the mesh states `k = 1..K` (the initial state carries no error),
/// flattened component-wise.
pub struct OdeCalibrationTarget<'a, F: ?Sized> {
    problem: OdeProblem<&'a F>,
    method: OneStepMethod,
    h: f64,
    p: u32,
    reference: Vec<f64>,
    indicator: Vec<f64>,
}

impl<'a, F: VectorField + ?Sized> OdeCalibrationTarget<'a, F> {
    pub fn new(
        problem: &OdeProblem<&'a F>,
        method: &OneStepMethod,
        h: f64,
        p: u32,
        indicator: &ErrorIndicatorSeries,
    ) -> Result<Self> {
        let det = ode::solve_deterministic(problem, method, h)?;
        if indicator.values.len() != det.states().len() {
            return Err(invalid(format!(
                "indicator has {} points but the mesh has {}",
                indicator.values.len(),
                det.states().len()
            )));
        }
        PerturbationSpec::new(p, 1.0, problem.dim())?;
        let reference = det.states()[1..].iter().flatten().copied().collect();
        let indicator = indicator.values[1..].iter().flatten().copied().collect();
        Ok(Self {
            problem: problem.clone(),
            method: method.clone(),
            h,
            p,
            reference,
            indicator,
        })
    }
}

impl<F: VectorField + ?Sized> CalibrationTarget for OdeCalibrationTarget<'_, F> {
    fn reference(&self) -> &[f64] {
        &self.reference
    }

    fn indicator(&self) -> &[f64] {
        &self.indicator
    }

    fn sample(&self, sigma: f64, seed: u64) -> Result<Vec<f64>> {
        let spec = PerturbationSpec::new(self.p, sigma, self.problem.dim())?;
        let traj = ode::solve_mesh(&self.problem, &self.method, &spec, self.h, seed)?;
        Ok(traj.states()[1..].iter().flatten().copied().collect())
    }
}

/// `log pi(sigma)` for a randomized ODE solver against `indicator`.
#[allow(clippy::too_many_arguments)]
pub fn log_pi_sigma<F: VectorField + ?Sized>(
    sigma: f64,
    problem: &OdeProblem<&F>,
    method: &OneStepMethod,
    h: f64,
    p: u32,
    indicator: &ErrorIndicatorSeries,
    n_mc: usize,
    seed: u64,
) -> Result<f64> {
    let target = OdeCalibrationTarget::new(problem, method, h, p, indicator)?;
    let opts = CalibrationOptions { n_mc, seed, ..Default::default() };
    log_pi(std::slice::from_ref(&target), sigma, &opts)
}

/// Calibrates `sigma` for a randomized ODE solver against `indicator`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_ode<F: VectorField + ?Sized>(
    problem: &OdeProblem<&F>,
    method: &OneStepMethod,
    h: f64,
    p: u32,
    indicator: &ErrorIndicatorSeries,
    n_mc: usize,
    seed: u64,
    sigma_grid: &[f64],
) -> Result<CalibrationResult> {
    let target = OdeCalibrationTarget::new(problem, method, h, p, indicator)?;
    let opts = CalibrationOptions { n_mc, seed, ..Default::default() };
    calibrate(std::slice::from_ref(&target), sigma_grid, &opts)
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
