use crate::error::{Error, Result};

/// Symmetric banded matrix stored by diagonals: `bands[k][i] = A[i][i + k]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SymBanded {
    pub bands: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(n: usize, half_bandwidth: usize) -> Self {
        Self { bands: (0..=half_bandwidth).map(|k| vec![0.0; n.saturating_sub(k)]).collect() }
    }

    pub fn n(&self) -> usize {
        self.bands[0].len()
    }

    /// Adds `v` to `A[i][j]` (and `A[j][i]`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.bands[hi - lo][lo] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.bands.get(hi - lo).map_or(0.0, |b| b[lo])
    }

    /// Solves `A x = b` by banded LDL^T without pivoting.
    pub fn solve(&self, b: &[f64], seed: Option<u64>) -> Result<Vec<f64>> {
        let n = self.n();
        let w = self.bands.len() - 1;
        let scale = self.bands[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut d = vec![0.0; n];
        // l[i][m] holds L[i][i - w + m] for m < w.
        let mut l = vec![vec![0.0; w]; n];
        for i in 0..n {
            let lo = i.saturating_sub(w);
            for j in lo..i {
                let mut s = self.get(i, j);
                for k in lo.max(j.saturating_sub(w))..j {
                    s -= l[i][k + w - i] * d[k] * l[j][k + w - j];
                }
                l[i][j + w - i] = s / d[j];
            }
            let mut s = self.get(i, i);
            for k in lo..i {
                s -= l[i][k + w - i].powi(2) * d[k];
            }
            if !(s.abs() > 1e-14 * scale) || !s.is_finite() {
                return Err(Error::Singular { row: i, pivot: s, scale, seed });
            }
            d[i] = s;
        }
        let mut y = b.to_vec();
        for i in 0..n {
            for k in i.saturating_sub(w)..i {
                y[i] -= l[i][k + w - i] * y[k];
            }
        }
        for (yi, di) in y.iter_mut().zip(&d) {
            *yi /= di;
        }
        for i in (0..n).rev() {
            for k in i + 1..(i + w + 1).min(n) {
                y[i] -= l[k][i + w - k] * y[k];
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &SymBanded, x: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|i| (0..x.len()).map(|j| a.get(i, j) * x[j]).sum()).collect()
    }

    #[test]
    fn identity_solve() {
        let mut a = SymBanded::zeros(4, 1);
        for i in 0..4 {
            a.add(i, i, 1.0);
        }
        assert_eq!(a.solve(&[0.0, 0.0, 1.0, 0.0], None).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn pentadiagonal_residual() {
        let n = 9;
        let mut a = SymBanded::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 6.0 + i as f64 * 0.1);
            if i + 1 < n {
                a.add(i, i + 1, -2.0);
            }
            if i + 2 < n {
                a.add(i, i + 2, 0.5);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = a.solve(&b, None).unwrap();
        for (r, bi) in dense_mul(&a, &x).iter().zip(&b) {
            assert!((r - bi).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_reports_row_and_seed() {
        let mut a = SymBanded::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(0, 1, 1.0);
        a.add(1, 1, 1.0);
        match a.solve(&[1.0, 1.0], Some(42)) {
            Err(Error::Singular { row: 1, seed: Some(42), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
