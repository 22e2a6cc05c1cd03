//! Dense row-major matrices and point sets.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dense symmetric matrix with full row-major storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// Builds from the lower triangle of `f(i, j)`, `j <= i`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    /// Accepts a row-major square buffer; rejects it unless symmetric to
    /// `tol` relative to its largest entry, then symmetrizes exactly.
    pub fn from_rows(n: usize, data: Vec<f64>, tol: f64) -> Result<Self> {
        check_dim(n * n, data.len())?;
        let scale = data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut m = Self { n, data };
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (m.data[i * n + j], m.data[j * n + i]);
                if (a - b).abs() > tol * scale {
                    return Err(Error::invalid(
                        "symmetric matrix",
                        format!("entries ({i},{j}) and ({j},{i}) differ: {a} vs {b}"),
                    ));
                }
                let avg = 0.5 * (a + b);
                m.data[i * n + j] = avg;
                m.data[j * n + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn add_diag(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `D · self · D` for diagonal `D = diag(d)`.
    pub fn scaled_by_diag(&self, d: &[f64]) -> Self {
        Self::from_fn(self.n, |i, j| d[i] * self.get(i, j) * d[j])
    }

    pub(crate) fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on 0
        let c = self.cols.max(1);
        self.data.chunks_exact(c).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps only the listed rows, in the listed order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// An ordered set of points in `dim`-dimensional space, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point set", "dimension must be at least 1"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::invalid(
                "point set",
                format!("{} coordinates do not split into {dim}-d points", coords.len()),
            ));
        }
        Ok(Self { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_1d(xs: Vec<f64>) -> Self {
        Self { dim: 1, coords: xs }
    }

    /// `n` equidistant points on `[a, b]`, both endpoints included.
    pub fn linspace(a: f64, b: f64, n: usize) -> Self {
        Self::from_1d(linspace(a, b, n))
    }

    /// Tensor grid of `linspace(a, b, n)` with itself; point `i * n + j`
    /// is `(axis[i], axis[j])`.
    pub fn tensor_grid(a: f64, b: f64, n: usize) -> Self {
        let axis = linspace(a, b, n);
        let mut coords = Vec::with_capacity(2 * n * n);
        for &x in &axis {
            for &y in &axis {
                coords.push(x);
                coords.push(y);
            }
        }
        Self { dim: 2, coords }
    }

    /// `4 * per_side` equidistant points on the boundary of `[a, b]^2`,
    /// walking counter-clockwise from `(a, a)`; corners appear once.
    pub fn square_boundary(a: f64, b: f64, per_side: usize) -> Self {
        let h = (b - a) / per_side as f64;
        let mut coords = Vec::with_capacity(8 * per_side);
        for s in 0..4 {
            for i in 0..per_side {
                let t = a + i as f64 * h;
                let u = b - i as f64 * h;
                let (x, y) = match s {
                    0 => (t, a),
                    1 => (b, t),
                    2 => (u, b),
                    _ => (a, u),
                };
                coords.push(x);
                coords.push(y);
            }
        }
        Self { dim: 2, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + i as f64 * h })
                .collect()
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
