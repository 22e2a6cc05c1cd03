//! Symmetric eigendecomposition: Householder reduction to tridiagonal form
//! followed by implicit QL iterations with Wilkinson-style shifts.

use super::matrix::SymMatrix;
use crate::error::{Error, Result};

/// Eigenpairs sorted by descending eigenvalue.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Row `i` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

const QL_MAX_ITER_PER_VALUE: usize = 60;

/// Full eigendecomposition of a symmetric matrix.
pub fn eigh(m: &SymMatrix) -> Result<Eigen> {
    let n = m.n();
    let mut a = m.clone().into_data();
    let (mut d, mut e, reflectors) = tridiagonalize(&mut a, n, true);
    let mut vt = accumulate(&reflectors, n);
    tql(&mut d, &mut e, Some(&mut vt), n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| vt[i * n..(i + 1) * n].to_vec())
        .collect();
    Ok(Eigen { values, vectors })
}

/// Eigenvalues only, descending. About half the work of [`eigh`].
pub fn eigvalsh(m: &SymMatrix) -> Result<Vec<f64>> {
    let n = m.n();
    let mut a = m.clone().into_data();
    let (mut d, mut e, _) = tridiagonalize(&mut a, n, false);
    tql(&mut d, &mut e, None, n)?;
    d.sort_by(|a, b| b.total_cmp(a));
    Ok(d)
}

struct Reflector {
    /// First index the reflector acts on.
    start: usize,
    v: Vec<f64>,
    beta: f64,
}

/// Reduces `a` (row-major, full storage, destroyed) to tridiagonal form.
/// Returns the diagonal, the off-diagonal padded with a trailing zero, and
/// optionally the Householder reflectors.
fn tridiagonalize(a: &mut [f64], n: usize, keep: bool) -> (Vec<f64>, Vec<f64>, Vec<Reflector>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut reflectors = Vec::new();
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let s = k + 1;
        let m = n - s;
        // column k below the diagonal == row k right of the diagonal
        let mut v: Vec<f64> = a[k * n + s..k * n + n].to_vec();
        let scale: f64 = v.iter().map(|x| x.abs()).sum();
        d[k] = a[k * n + k];
        if scale == 0.0 {
            e[k] = 0.0;
            continue;
        }
        v.iter_mut().for_each(|x| *x /= scale);
        let sigma: f64 = v.iter().map(|x| x * x).sum();
        let alpha = if v[0] > 0.0 { -sigma.sqrt() } else { sigma.sqrt() };
        e[k] = alpha * scale;
        // v = x - alpha e1, beta = 2 / vᵀv
        let h = sigma - v[0] * alpha;
        v[0] -= alpha;
        let beta = 1.0 / h;

        // p = beta A22 v
        let p = &mut p[..m];
        for i in 0..m {
            let row = &a[(s + i) * n + s..(s + i) * n + n];
            p[i] = beta * row.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
        }
        // w = p - (beta/2)(pᵀv) v
        let kfac = 0.5 * beta * p.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
        for i in 0..m {
            p[i] -= kfac * v[i];
        }
        // A22 -= v wᵀ + w vᵀ
        for i in 0..m {
            let (vi, wi) = (v[i], p[i]);
            let row = &mut a[(s + i) * n + s..(s + i) * n + n];
            for ((x, vj), wj) in row.iter_mut().zip(&v).zip(p.iter()) {
                *x -= vi * wj + wi * vj;
            }
        }
        if keep {
            reflectors.push(Reflector { start: s, v, beta });
        }
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2) * n + n - 2];
        e[n - 2] = a[(n - 2) * n + n - 1];
    }
    if n >= 1 {
        d[n - 1] = a[(n - 1) * n + n - 1];
        e[n - 1] = 0.0;
    }
    (d, e, reflectors)
}

/// Returns `Qᵀ` (row-major) where `Q = H_0 H_1 ⋯` is the product of the
/// reflectors.
fn accumulate(reflectors: &[Reflector], n: usize) -> Vec<f64> {
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    // Q = H_k Q for k descending; H_k touches rows/cols >= start only.
    let mut tmp = vec![0.0; n];
    for r in reflectors.iter().rev() {
        let s = r.start;
        let tmp = &mut tmp[s..n];
        tmp.iter_mut().for_each(|t| *t = 0.0);
        for (i, &vi) in r.v.iter().enumerate() {
            let row = &q[(s + i) * n + s..(s + i) * n + n];
            for (t, x) in tmp.iter_mut().zip(row) {
                *t += vi * x;
            }
        }
        for (i, &vi) in r.v.iter().enumerate() {
            let f = r.beta * vi;
            let row = &mut q[(s + i) * n + s..(s + i) * n + n];
            for (x, t) in row.iter_mut().zip(tmp.iter()) {
                *x -= f * t;
            }
        }
    }
    // transpose in place
    for i in 0..n {
        for j in 0..i {
            q.swap(i * n + j, j * n + i);
        }
    }
    q
}

/// Implicit QL on the tridiagonal `(d, e)`; `e[i]` couples `i` and `i+1`.
/// Rotations are applied to the rows of `vt` when present.
fn tql(d: &mut [f64], e: &mut [f64], mut vt: Option<&mut Vec<f64>>, n: usize) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER_PER_VALUE {
                    return Err(Error::NoConvergence { iterations: iter });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(vt) = vt.as_deref_mut() {
                        let (lo, hi) = vt.split_at_mut((i + 1) * n);
                        let row_i = &mut lo[i * n..];
                        let row_j = &mut hi[..n];
                        for (a, b) in row_i.iter_mut().zip(row_j.iter_mut()) {
                            let hb = *b;
                            *b = s * *a + c * hb;
                            *a = c * *a - s * hb;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}
