//! Gaussian step perturbations for randomized one-step integrators.
//!
//! Each step `k` of length `h` carries a zero-mean Gaussian process
//! `xi_k(t)`, `t in [0, h]`, with `E[xi_k(h) xi_k(h)^T] = sigma^2 h^(2p+1) I`.
//! The end-of-step value is what the integrator adds on the mesh; values
//! strictly inside the step are only needed for off-grid evaluation and are
//! drawn later from the conditional law given everything already recorded
//! for that step.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Order `p` and scale `sigma` of the step perturbation, for a state of
/// dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    p: u32,
    sigma: f64,
    dim: usize,
}

impl PerturbationSpec {
    pub fn new(p: u32, sigma: f64, dim: usize) -> Result<Self> {
        if p < 1 {
            return Err(invalid(format!("perturbation order must be >= 1, got {p}")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("noise scale must be finite and >= 0, got {sigma}")));
        }
        if dim < 1 {
            return Err(invalid("state dimension must be >= 1"));
        }
        Ok(Self { p, sigma, dim })
    }

    /// A spec that never perturbs.
    pub fn zero(dim: usize) -> Self {
        Self { p: 1, sigma: 0.0, dim: dim.max(1) }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.sigma == 0.0
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.p, sigma, self.dim)
    }

    /// Variance of each component of `xi(h)`: `sigma^2 h^(2p+1)`.
    pub fn end_variance(&self, h: f64) -> f64 {
        self.sigma * self.sigma * h.powi(2 * self.p as i32 + 1)
    }
}

/// Covariance family of the within-step process.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKernel {
    /// `xi(t) = sigma h^p B(t)` for a standard Brownian motion `B`.
    Brownian,
    /// Integral of an Ornstein-Uhlenbeck process started at zero, with
    /// per-component mean-reversion rates (one entry broadcasts to all
    /// components). The diffusion is scaled so the end-of-step variance is
    /// `sigma^2 h^(2p+1)`.
    IntegratedOu { rates: Vec<f64> },
}

impl NoiseKernel {
    fn rate(&self, d: usize) -> f64 {
        match self {
            NoiseKernel::Brownian => 0.0,
            NoiseKernel::IntegratedOu { rates } => {
                if rates.len() == 1 {
                    rates[0]
                } else {
                    rates[d]
                }
            }
        }
    }

    /// `Cov(xi_d(s), xi_d(t))` on a step of length `h`.
    pub fn covariance(&self, spec: &PerturbationSpec, h: f64, d: usize, s: f64, t: f64) -> f64 {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        match self {
            NoiseKernel::Brownian => {
                spec.sigma * spec.sigma * h.powi(2 * spec.p as i32) * lo
            }
            NoiseKernel::IntegratedOu { .. } => {
                let rate = self.rate(d);
                let x = rate * lo;
                let a = -(-x).exp_m1();
                let tail = -(-(rate * (hi - lo))).exp_m1();
                spec.end_variance(h) * (iou_shape(x) + a * a * tail) / iou_shape(rate * h)
            }
        }
    }
}

/// `2x - 4(1 - e^-x) + (1 - e^-2x)`, which is `Lambda^3 / Sigma` times the
/// variance of an integrated OU process at time `x / Lambda`.
pub(crate) fn iou_shape(x: f64) -> f64 {
    if x < 0.5 {
        // sum_{n>=3} (-1)^n (4 - 2^n) x^n / n!
        let mut term = x * x / 2.0;
        let mut pow2 = 4.0;
        let mut sum = 0.0;
        for n in 3..40 {
            term *= -x / n as f64;
            pow2 *= 2.0;
            let c = (4.0 - pow2) * term;
            sum += c;
            if c.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        2.0 * x + 4.0 * (-x).exp_m1() - (-2.0 * x).exp_m1()
    }
}

/// Draws the end-of-step increment `xi(h) ~ N(0, sigma^2 h^(2p+1) I)`.
pub fn draw_end_increment<R: Rng + ?Sized>(
    spec: &PerturbationSpec,
    h: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(invalid(format!("step length must be positive, got {h}")));
    }
    if spec.is_zero() {
        return Ok(vec![0.0; spec.dim]);
    }
    let sd = spec.end_variance(h).sqrt();
    Ok((0..spec.dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Recorded draws of one step's perturbation process.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoiseState {
    h: f64,
    xi_h: Option<Vec<f64>>,
    interior: Vec<(f64, Vec<f64>)>,
}

impl StepNoiseState {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(invalid(format!("step length must be positive, got {h}")));
        }
        Ok(Self { h, xi_h: None, interior: Vec::new() })
    }

    /// State whose end increment is already known.
    pub fn with_end(h: f64, xi_h: Vec<f64>) -> Result<Self> {
        let mut state = Self::new(h)?;
        state.xi_h = Some(xi_h);
        Ok(state)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn end_increment(&self) -> Option<&[f64]> {
        self.xi_h.as_deref()
    }

    pub fn interior(&self) -> &[(f64, Vec<f64>)] {
        &self.interior
    }

    /// Previously drawn value at exactly time `s`, if any.
    pub fn recorded(&self, s: f64) -> Option<&[f64]> {
        if s == self.h {
            return self.end_increment();
        }
        self.interior
            .iter()
            .find(|(t, _)| *t == s)
            .map(|(_, v)| v.as_slice())
    }

    /// Draws `xi(s)` for `0 < s < h` conditionally on every value recorded so
    /// far, and records it. Interior times must increase.
    pub fn draw_interior_increment<R: Rng + ?Sized>(
        &mut self,
        spec: &PerturbationSpec,
        kernel: &NoiseKernel,
        s: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if !(s > 0.0 && s < self.h) {
            return Err(invalid(format!("interior time {s} outside (0, {})", self.h)));
        }
        if let Some((last, _)) = self.interior.last() {
            if s <= *last {
                return Err(invalid(format!(
                    "interior times must increase: {s} after {last}"
                )));
            }
        }
        let value = self.conditional_draw(spec, kernel, s, rng);
        self.interior.push((s, value.clone()));
        Ok(value)
    }

    /// Draws `xi(h)` conditionally on the interior values and records it.
    pub fn complete_end_increment<R: Rng + ?Sized>(
        &mut self,
        spec: &PerturbationSpec,
        kernel: &NoiseKernel,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if self.xi_h.is_some() {
            return Err(Error::State("end increment already drawn".into()));
        }
        let value = self.conditional_draw(spec, kernel, self.h, rng);
        self.xi_h = Some(value.clone());
        Ok(value)
    }

    fn conditional_draw<R: Rng + ?Sized>(
        &self,
        spec: &PerturbationSpec,
        kernel: &NoiseKernel,
        s: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        if spec.is_zero() {
            return vec![0.0; spec.dim];
        }
        let mut times: Vec<f64> = self.interior.iter().map(|(t, _)| *t).collect();
        let mut values: Vec<&[f64]> = self.interior.iter().map(|(_, v)| v.as_slice()).collect();
        if let Some(end) = &self.xi_h {
            times.push(self.h);
            values.push(end);
        }
        let shared = matches!(kernel, NoiseKernel::Brownian);
        let mut cached: Option<(Vec<f64>, f64)> = None;
        (0..spec.dim)
            .map(|d| {
                let (weights, var) = match (&cached, shared) {
                    (Some(c), true) => c.clone(),
                    _ => {
                        let cov = |a: f64, b: f64| kernel.covariance(spec, self.h, d, a, b);
                        let c = conditional_weights(&times, s, cov);
                        cached = Some(c.clone());
                        c
                    }
                };
                let mean: f64 = weights.iter().zip(&values).map(|(w, v)| w * v[d]).sum();
                mean + var.max(0.0).sqrt() * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }
}

/// Kriging weights `K^-1 k` and conditional variance `k(s,s) - k^T K^-1 k`
/// for a zero-mean Gaussian process observed at `times`.
fn conditional_weights(times: &[f64], s: f64, cov: impl Fn(f64, f64) -> f64) -> (Vec<f64>, f64) {
    let m = times.len();
    let kss = cov(s, s);
    if m == 0 {
        return (Vec::new(), kss);
    }
    // Cholesky of the Gram matrix, lower triangle stored row-major.
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut acc = cov(times[i], times[j]);
            for k in 0..j {
                acc -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                l[i * m + i] = acc.max(1e-300).sqrt();
            } else {
                l[i * m + j] = acc / l[j * m + j];
            }
        }
    }
    let k: Vec<f64> = times.iter().map(|&t| cov(t, s)).collect();
    // Forward solve L z = k.
    let mut z = vec![0.0; m];
    for i in 0..m {
        let mut acc = k[i];
        for j in 0..i {
            acc -= l[i * m + j] * z[j];
        }
        z[i] = acc / l[i * m + i];
    }
    let var = kss - z.iter().map(|v| v * v).sum::<f64>();
    // Back solve L^T w = z.
    let mut w = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = z[i];
        for j in i + 1..m {
            acc -= l[j * m + i] * w[j];
        }
        w[i] = acc / l[i * m + i];
    }
    (w, var)
}
