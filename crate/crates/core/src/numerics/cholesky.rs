//! Cholesky factorization with a jitter escalation schedule.

use serde::{Deserialize, Serialize};

use super::matrix::SymMatrix;
use crate::error::{check_dim, Error, Result};

/// Retries after the first attempt; each multiplies the jitter by 10.
pub const MAX_JITTER_RETRIES: usize = 8;
/// Largest admissible jitter relative to the maximum diagonal entry.
pub const JITTER_CAP_REL: f64 = 1e-4;

/// Lower-triangular factor `L` with `L Lᵀ = m + jitter·I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cholesky {
    n: usize,
    /// Row-major, upper triangle zero.
    l: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes `m + jitter·I` for the smallest jitter in
    /// `{start, 10·start, …}` (at most [`MAX_JITTER_RETRIES`] retries) that
    /// succeeds and stays below `1e-4 · max diag(m)`.
    pub fn factor(m: &SymMatrix, jitter_start: f64) -> Result<Self> {
        if !(jitter_start >= 0.0) {
            return Err(Error::invalid("jitter", format!("{jitter_start} is negative")));
        }
        let cap = JITTER_CAP_REL * m.max_diag().abs();
        let mut jitter = jitter_start;
        for _ in 0..=MAX_JITTER_RETRIES {
            if jitter > cap {
                break;
            }
            if let Some(l) = try_factor(m, jitter) {
                return Ok(Self { n: m.n(), l, jitter });
            }
            if jitter == 0.0 {
                break;
            }
            jitter *= 10.0;
        }
        Err(Error::NotFactorizable { jitter, cap })
    }

    /// Tries `jitter = 0` first and then escalates from `rel · max diag`.
    pub fn factor_auto(m: &SymMatrix, rel: f64) -> Result<Self> {
        match Self::factor(m, 0.0) {
            Ok(c) => Ok(c),
            Err(_) => Self::factor(m, rel * m.max_diag().abs()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.l[i * self.n..i * self.n + i + 1]
    }

    /// `log det(L Lᵀ)`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn solve_upper_in_place(&self, y: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let xi = y[i] / self.l[i * n + i];
            y[i] = xi;
            let row = &self.l[i * n..i * n + i];
            for (yk, a) in y[..i].iter_mut().zip(row) {
                *yk -= a * xi;
            }
        }
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, b.len())?;
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        Ok(x)
    }

    /// `L v`.
    pub fn mul_lower(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `L Lᵀ` (which equals the factored matrix plus jitter).
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| {
            let k = j.min(i) + 1;
            self.row(i)[..k].iter().zip(&self.row(j)[..k]).map(|(a, b)| a * b).sum()
        })
    }

    pub(crate) fn from_parts(n: usize, l: Vec<f64>, jitter: f64) -> Result<Self> {
        check_dim(n * n, l.len())?;
        for i in 0..n {
            if !(l[i * n + i] > 0.0) {
                return Err(Error::format("Cholesky factor", "non-positive diagonal"));
            }
        }
        Ok(Self { n, l, jitter })
    }

    pub(crate) fn lower(&self) -> &[f64] {
        &self.l
    }
}

fn try_factor(m: &SymMatrix, jitter: f64) -> Option<Vec<f64>> {
    let n = m.n();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let s: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
            if i == j {
                let d = m.get(i, i) + jitter - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (m.get(i, j) - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Free-function form of [`Cholesky::factor`].
pub fn cholesky(m: &SymMatrix, jitter_start: f64) -> Result<Cholesky> {
    Cholesky::factor(m, jitter_start)
}
