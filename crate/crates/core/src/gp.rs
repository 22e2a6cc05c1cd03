//! Gaussian-process kernels, mean functions, sampling on point sets, and
//! Karhunen–Loève energy dimensions.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{eigvalsh, linspace, Cholesky, Matrix, PointSet, Rng, SymMatrix};

/// Relative jitter the GP samplers start escalating from.
pub const GP_JITTER_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `σ² exp(-r² / 2l²)`.
    SquaredExponential,
    /// `σ² (1 + √5 r/l + 5r²/3l²) exp(-r/l)`. Not positive definite; kept
    /// for comparison only.
    MaternPaperForm,
    /// Matérn ν = 5/2: `σ² (1 + √5 r/l + 5r²/3l²) exp(-√5 r/l)`.
    MaternStandard52,
}

/// Stationary covariance kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub sigma: f64,
    pub length: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, sigma: f64, length: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(length > 0.0) {
            return Err(Error::invalid(
                "kernel",
                format!("sigma ({sigma}) and length ({length}) must be positive"),
            ));
        }
        Ok(Self {
            kind,
            sigma,
            length,
        })
    }

    pub fn squared_exponential(sigma: f64, length: f64) -> Self {
        Self {
            kind: KernelKind::SquaredExponential,
            sigma,
            length,
        }
    }

    pub fn matern52(sigma: f64, length: f64) -> Self {
        Self {
            kind: KernelKind::MaternStandard52,
            sigma,
            length,
        }
    }

    /// Kernel value at distance `r >= 0`.
    #[inline]
    pub fn at_distance(&self, r: f64) -> f64 {
        let s = r / self.length;
        let var = self.sigma * self.sigma;
        match self.kind {
            KernelKind::SquaredExponential => var * (-0.5 * s * s).exp(),
            KernelKind::MaternPaperForm => {
                var * (1.0 + 5f64.sqrt() * s + 5.0 * s * s / 3.0) * (-s).exp()
            }
            KernelKind::MaternStandard52 => {
                let t = 5f64.sqrt() * s;
                var * (1.0 + t + t * t / 3.0) * (-t).exp()
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.at_distance(r2.sqrt())
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Free-function form of [`Kernel::eval`].
pub fn kernel_eval(k: &Kernel, x: &[f64], x2: &[f64]) -> f64 {
    k.eval(x, x2)
}

/// Gram matrix `K_ij = k(p_i, p_j)`.
pub fn gram(k: &Kernel, points: &PointSet) -> SymMatrix {
    SymMatrix::from_fn(points.len(), |i, j| k.eval(points.point(i), points.point(j)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "amplitude", rename_all = "snake_case")]
pub enum MeanFn {
    Zero,
    Constant(f64),
    /// `a sin πx`
    SinPi(f64),
    /// `a sin πx₁ sin πx₂`
    ProductSinPi2D(f64),
}

impl MeanFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            MeanFn::Zero => 0.0,
            MeanFn::Constant(c) => c,
            MeanFn::SinPi(a) => a * (PI * x[0]).sin(),
            MeanFn::ProductSinPi2D(a) => a * (PI * x[0]).sin() * (PI * x[1]).sin(),
        }
    }
}

/// Pointwise map from the latent Gaussian field to the observed process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "shift", rename_all = "snake_case")]
pub enum Transform {
    None,
    /// Observed process is `shift + exp(latent)`.
    LogShift(f64),
}

impl Transform {
    #[inline]
    pub fn apply(&self, latent: f64) -> f64 {
        match *self {
            Transform::None => latent,
            Transform::LogShift(s) => s + latent.exp(),
        }
    }

    /// Inverse map; `NaN` outside the range.
    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        match *self {
            Transform::None => v,
            Transform::LogShift(s) => (v - s).ln(),
        }
    }
}

/// A (possibly transformed) Gaussian process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSpec {
    pub mean: MeanFn,
    pub kernel: Kernel,
    pub transform: Transform,
}

impl GpSpec {
    pub fn new(mean: MeanFn, kernel: Kernel, transform: Transform) -> Self {
        Self {
            mean,
            kernel,
            transform,
        }
    }

    pub fn latent_mean(&self, points: &PointSet) -> Vec<f64> {
        points.iter().map(|p| self.mean.eval(p)).collect()
    }

    /// Exact pointwise mean of the observed process.
    pub fn analytic_mean(&self, x: &[f64]) -> f64 {
        let m = self.mean.eval(x);
        match self.transform {
            Transform::None => m,
            Transform::LogShift(s) => s + (m + 0.5 * self.kernel.variance()).exp(),
        }
    }

    /// Exact covariance of the observed process between two points.
    pub fn analytic_cov(&self, x: &[f64], y: &[f64]) -> f64 {
        let k = self.kernel.eval(x, y);
        match self.transform {
            Transform::None => k,
            Transform::LogShift(_) => {
                let (mx, my) = (self.mean.eval(x), self.mean.eval(y));
                (mx + my + self.kernel.variance()).exp() * k.exp_m1()
            }
        }
    }

    pub fn analytic_std(&self, x: &[f64]) -> f64 {
        self.analytic_cov(x, x).max(0.0).sqrt()
    }
}

#[derive(Clone, Debug)]
enum Factor {
    Dense(Cholesky),
    /// Separable kernel on an `n × n` tensor grid: `K = L₁L₁ᵀ ⊗ L₁L₁ᵀ`.
    Kron { n: usize, l1: Cholesky },
    /// Variance underflowed to zero: every draw is the mean.
    Zero,
}

/// Draws the process on a fixed point set, reusing one factorization.
#[derive(Clone, Debug)]
pub struct GpSampler {
    mean: Vec<f64>,
    factor: Factor,
    transform: Transform,
}

impl GpSampler {
    pub fn new(spec: &GpSpec, points: &PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("GP points", "no points"));
        }
        let g = gram(&spec.kernel, points);
        let factor = if g.max_diag() == 0.0 {
            Factor::Zero
        } else {
            Factor::Dense(Cholesky::factor(&g, GP_JITTER_REL * g.max_diag())?)
        };
        Ok(Self {
            mean: spec.latent_mean(points),
            factor,
            transform: spec.transform,
        })
    }

    /// Sampler on `PointSet::tensor_grid(a, b, n)` exploiting separability
    /// of the squared-exponential kernel; falls back to a dense factor for
    /// other kernels.
    pub fn tensor_grid(spec: &GpSpec, a: f64, b: f64, n: usize) -> Result<Self> {
        let points = PointSet::tensor_grid(a, b, n);
        if spec.kernel.kind != KernelKind::SquaredExponential || spec.kernel.variance() == 0.0 {
            return Self::new(spec, &points);
        }
        let axis = PointSet::linspace(a, b, n);
        let k1 = Kernel::squared_exponential(spec.kernel.sigma.sqrt(), spec.kernel.length);
        let g = gram(&k1, &axis);
        let l1 = Cholesky::factor(&g, GP_JITTER_REL * g.max_diag())?;
        Ok(Self {
            mean: spec.latent_mean(&points),
            factor: Factor::Kron { n, l1 },
            transform: spec.transform,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Jitter used by the underlying factorization.
    pub fn jitter(&self) -> f64 {
        match &self.factor {
            Factor::Dense(l) => l.jitter(),
            Factor::Kron { l1, .. } => l1.jitter(),
            Factor::Zero => 0.0,
        }
    }

    /// One draw of the latent Gaussian field (before the transform).
    pub fn draw_latent(&self, rng: &mut Rng) -> Vec<f64> {
        let mut out = self.mean.clone();
        match &self.factor {
            Factor::Dense(l) => {
                let mut xi = vec![0.0; self.mean.len()];
                rng.fill_standard_normal(&mut xi);
                for (o, v) in out.iter_mut().zip(l.mul_lower(&xi)) {
                    *o += v;
                }
            }
            Factor::Kron { n, l1 } => {
                let n = *n;
                let mut z = vec![0.0; n * n];
                rng.fill_standard_normal(&mut z);
                // t = L₁ Z, then out += t L₁ᵀ
                let mut t = vec![0.0; n * n];
                for i in 0..n {
                    for (a, &lia) in l1.row(i).iter().enumerate() {
                        for j in 0..n {
                            t[i * n + j] += lia * z[a * n + j];
                        }
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        let r = l1.row(j);
                        let s: f64 = r.iter().zip(&t[i * n..i * n + r.len()]).map(|(x, y)| x * y).sum();
                        out[i * n + j] += s;
                    }
                }
            }
            Factor::Zero => {}
        }
        out
    }

    /// One draw of the observed process.
    pub fn draw(&self, rng: &mut Rng) -> Vec<f64> {
        let mut v = self.draw_latent(rng);
        v.iter_mut().for_each(|x| *x = self.transform.apply(*x));
        v
    }

    /// `n_draws` rows, row `j` drawn from its own stream split off `rng`.
    pub fn draw_many(&self, rng: &mut Rng, n_draws: usize) -> Matrix {
        let base = Rng::new(rng.next_seed());
        let rows: Vec<Vec<f64>> = (0..n_draws)
            .into_par_iter()
            .map(|j| self.draw(&mut base.split_index("gp-draw", j as u64)))
            .collect();
        Matrix::from_rows(&rows).expect("rows share a length")
    }
}

/// `n_draws × n_points` matrix of process draws.
pub fn sample_gp(spec: &GpSpec, points: &PointSet, rng: &mut Rng, n_draws: usize) -> Result<Matrix> {
    Ok(GpSampler::new(spec, points)?.draw_many(rng, n_draws))
}

/// Smallest `m` whose leading `m` eigenvalues (descending) reach `energy`
/// of the total.
pub fn energy_dimension(eigenvalues_desc: &[f64], energy: f64) -> usize {
    let total: f64 = eigenvalues_desc.iter().sum();
    let target = energy * total;
    let mut acc = 0.0;
    for (i, &l) in eigenvalues_desc.iter().enumerate() {
        acc += l;
        if acc >= target {
            return i + 1;
        }
    }
    eigenvalues_desc.len()
}

/// Karhunen–Loève truncation dimension of `k` on a uniform grid over
/// `domain`.
pub fn kl_dimension(k: &Kernel, domain: (f64, f64), grid_n: usize, energy: f64) -> Result<usize> {
    if grid_n < 256 {
        return Err(Error::invalid("KL grid", format!("{grid_n} points; need at least 256")));
    }
    if !(energy > 0.0 && energy < 1.0) {
        return Err(Error::invalid("energy fraction", format!("{energy} not in (0, 1)")));
    }
    let x = linspace(domain.0, domain.1, grid_n);
    let g = SymMatrix::from_fn(grid_n, |i, j| k.at_distance((x[i] - x[j]).abs()));
    let lam = eigvalsh(&g)?;
    Ok(energy_dimension(&lam, energy))
}
