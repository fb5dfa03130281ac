//! Autonomous vector fields.

/// Right-hand side `f` of `du/dt = f(u)`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `f(u)` into `du`; both slices have length `dim()`.
    fn eval(&self, u: &[f64], du: &mut [f64]);

    fn eval_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut du = vec![0.0; self.dim()];
        self.eval(u, &mut du);
        du
    }
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, u: &[f64], du: &mut [f64]) {
        (**self).eval(u, du)
    }
}

impl<T: VectorField + ?Sized> VectorField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, u: &[f64], du: &mut [f64]) {
        (**self).eval(u, du)
    }
}

/// Vector field from a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, u: &[f64], du: &mut [f64]) {
        (self.f)(u, du)
    }
}

/// Decoupled linear growth `du_i/dt = rate_i u_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    pub rates: Vec<f64>,
}

impl LinearField {
    pub fn scalar(rate: f64) -> Self {
        Self { rates: vec![rate] }
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.rates.len()
    }
    fn eval(&self, u: &[f64], du: &mut [f64]) {
        for ((d, x), r) in du.iter_mut().zip(u).zip(&self.rates) {
            *d = r * x;
        }
    }
}

/// FitzHugh-Nagumo oscillator on the state `(V, R)`:
///
/// `dV/dt = c (V - V^3/3 + R)`, `dR/dt = -(V - a + b R) / c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitzHughNagumo {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl VectorField for FitzHughNagumo {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, u: &[f64], du: &mut [f64]) {
        let (v, r) = (u[0], u[1]);
        du[0] = self.c * (v - v * v * v / 3.0 + r);
        du[1] = -(v - self.a + self.b * r) / self.c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitzhugh_nagumo_rhs() {
        let f = FitzHughNagumo { a: 0.2, b: 0.2, c: 3.0 };
        let du = f.eval_vec(&[-1.0, 1.0]);
        assert!((du[0] - 3.0 * (-1.0 + 1.0 / 3.0 + 1.0)).abs() < 1e-15);
        assert!((du[1] - (-(-1.0 - 0.2 + 0.2) / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn closure_field() {
        let f = FnField::new(1, |u: &[f64], du: &mut [f64]| du[0] = 2.0 * u[0]);
        assert_eq!(f.eval_vec(&[3.0]), vec![6.0]);
        let by_ref: &dyn VectorField = &f;
        assert_eq!(by_ref.eval_vec(&[1.0]), vec![2.0]);
    }
}
