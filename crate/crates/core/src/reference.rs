//! Finite-difference solvers and Monte Carlo reference statistics.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gp::{GpSampler, GpSpec};
use crate::numerics::{PointSet, Rng, SymMatrix};
use crate::problem::{FieldSolver, OperatorId, ProblemSpec};

/// Uniform grid on `[a, b]` including both endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("grid", format!("{n} points; need at least 3")));
        }
        if !(b > a) {
            return Err(Error::invalid("grid", "empty interval"));
        }
        Ok(Self { a, b, n })
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    pub fn points(&self) -> PointSet {
        PointSet::linspace(self.a, self.b, self.n)
    }

    /// Piecewise-linear interpolation of grid values.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let t = ((x - self.a) / self.h()).clamp(0.0, (self.n - 1) as f64);
        let i = (t.floor() as usize).min(self.n - 2);
        let w = t - i as f64;
        (1.0 - w) * values[i] + w * values[i + 1]
    }
}

/// Tensor grid on `[a, b]²`; point `i·n + j` is `(x_i, x_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub axis: Grid1D,
}

impl Grid2D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        Ok(Self {
            axis: Grid1D::new(a, b, n)?,
        })
    }

    pub fn n(&self) -> usize {
        self.axis.n
    }

    pub fn points(&self) -> PointSet {
        PointSet::tensor_grid(self.axis.a, self.axis.b, self.axis.n)
    }

    pub fn on_boundary(&self, idx: usize) -> bool {
        let n = self.n();
        let (i, j) = (idx / n, idx % n);
        i == 0 || j == 0 || i == n - 1 || j == n - 1
    }

    /// Bilinear interpolation of grid values.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let g = &self.axis;
        let n = g.n;
        let loc = |v: f64| {
            let t = ((v - g.a) / g.h()).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            (i, t - i as f64)
        };
        let (i, u) = loc(x[0]);
        let (j, v) = loc(x[1]);
        let at = |a: usize, b: usize| values[a * n + b];
        (1.0 - u) * ((1.0 - v) * at(i, j) + v * at(i, j + 1)) + u * ((1.0 - v) * at(i + 1, j) + v * at(i + 1, j + 1))
    }
}

/// Solves a tridiagonal system; `lower[0]` and `upper[n-1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::SingularSystem(0));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem(i));
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// `−(k_half u')' = f` with midpoint coefficients `k_half[i]` between nodes
/// `i` and `i + 1`.
fn solve_conservative(k_half: &[f64], f: &[f64], bc: (f64, f64), grid: &Grid1D) -> Result<Vec<f64>> {
    let n = grid.n;
    let m = n - 2;
    let h2 = grid.h() * grid.h();
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for r in 0..m {
        let i = r + 1;
        let (kl, kr) = (k_half[i - 1], k_half[i]);
        diag[r] = (kl + kr) / h2;
        lower[r] = -kl / h2;
        upper[r] = -kr / h2;
        rhs[r] = f[i];
    }
    rhs[0] += k_half[0] / h2 * bc.0;
    rhs[m - 1] += k_half[n - 2] / h2 * bc.1;
    let interior = thomas(&lower, &diag, &upper, &rhs)?;
    let mut u = Vec::with_capacity(n);
    u.push(bc.0);
    u.extend(interior);
    u.push(bc.1);
    Ok(u)
}

/// `−u'' = f` by second-order central differences.
pub fn solve_poisson_1d(f: &[f64], bc: (f64, f64), grid: &Grid1D) -> Result<Vec<f64>> {
    check_dim(grid.n, f.len())?;
    solve_conservative(&vec![1.0; grid.n - 1], f, bc, grid)
}

/// `−(k u')' = f` with arithmetic-mean midpoint coefficients.
pub fn solve_divform_1d(k: &[f64], f: &[f64], bc: (f64, f64), grid: &Grid1D) -> Result<Vec<f64>> {
    check_dim(grid.n, f.len())?;
    check_dim(grid.n, k.len())?;
    if let Some((index, &value)) = k.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveCoefficient { index, value });
    }
    let k_half: Vec<f64> = k.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    solve_conservative(&k_half, f, bc, grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Converged once the residual ∞-norm drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonSolution {
    pub u: Vec<f64>,
    /// Residual ∞-norm at the start and after every step.
    pub residual_history: Vec<f64>,
}

/// `−Δu + c·u(u² − 1) = f` with zero Dirichlet data, 5-point Laplacian,
/// and damped Newton from `u = 0`. `c` is either one value or one per grid
/// point.
pub fn solve_allen_cahn_2d(f: &[f64], grid: &Grid2D, cubic: &[f64], newton: &NewtonOptions) -> Result<NewtonSolution> {
    let n = grid.n();
    check_dim(n * n, f.len())?;
    if cubic.len() != 1 {
        check_dim(n * n, cubic.len())?;
    }
    let coef = |p: usize| if cubic.len() == 1 { cubic[0] } else { cubic[p] };
    let m = n - 2;
    let h2 = grid.axis.h() * grid.axis.h();
    let node = |r: usize| (r / m + 1) * n + (r % m + 1);

    let residual = |u: &[f64], out: &mut [f64]| -> f64 {
        let mut norm: f64 = 0.0;
        for r in 0..m * m {
            let (i, j) = (r / m, r % m);
            let mut nb = 0.0;
            if i > 0 {
                nb += u[r - m];
            }
            if i + 1 < m {
                nb += u[r + m];
            }
            if j > 0 {
                nb += u[r - 1];
            }
            if j + 1 < m {
                nb += u[r + 1];
            }
            let p = node(r);
            let v = u[r];
            out[r] = (4.0 * v - nb) / h2 + coef(p) * v * (v * v - 1.0) - f[p];
            norm = norm.max(out[r].abs());
        }
        norm
    };

    let mut u = vec![0.0; m * m];
    let mut res = vec![0.0; m * m];
    let mut norm = residual(&u, &mut res);
    let mut history = vec![norm];
    let mut trial = vec![0.0; m * m];
    let mut trial_res = vec![0.0; m * m];
    let mut iter = 0;
    while norm >= newton.tol {
        if iter == newton.max_iter {
            return Err(Error::NewtonDiverged {
                iterations: iter,
                residual: norm,
            });
        }
        let diag: Vec<f64> = (0..m * m)
            .map(|r| 4.0 / h2 + coef(node(r)) * (3.0 * u[r] * u[r] - 1.0))
            .collect();
        let chol = BandCholesky::laplacian_plus_diag(m, -1.0 / h2, &diag)?;
        let step = chol.solve(&res);
        let mut alpha = 1.0;
        loop {
            for ((t, v), s) in trial.iter_mut().zip(&u).zip(&step) {
                *t = v - alpha * s;
            }
            let tn = residual(&trial, &mut trial_res);
            if tn < norm || alpha < 1e-6 {
                std::mem::swap(&mut u, &mut trial);
                std::mem::swap(&mut res, &mut trial_res);
                norm = tn;
                break;
            }
            alpha *= 0.5;
        }
        history.push(norm);
        iter += 1;
    }
    let mut full = vec![0.0; n * n];
    for (r, v) in u.iter().enumerate() {
        full[node(r)] = *v;
    }
    Ok(NewtonSolution {
        u: full,
        residual_history: history,
    })
}

/// Banded Cholesky factor of an SPD matrix with half-bandwidth `bw`.
struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i-bw..=i]`.
    band: Vec<f64>,
}

impl BandCholesky {
    /// Matrix of the `m × m` interior 5-point stencil: `diag` on the
    /// diagonal and `off` for each grid neighbour.
    fn laplacian_plus_diag(m: usize, off: f64, diag: &[f64]) -> Result<Self> {
        let n = m * m;
        let bw = m;
        let w = bw + 1;
        let a = |i: usize, j: usize| -> f64 {
            if i == j {
                diag[i]
            } else if i - j == m || (i - j == 1 && i % m != 0) {
                off
            } else {
                0.0
            }
        };
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = a(i, j);
                for k in k0..j {
                    s -= band[i * w + (k + bw - i)] * band[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotFactorizable { jitter: 0.0, cap: 0.0 });
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let mut s = y[i];
            for j in j0..i {
                s -= self.band[i * w + (j + bw - i)] * y[j];
            }
            y[i] = s / self.band[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..(i + bw + 1).min(n) {
                s -= self.band[j * w + (i + bw - j)] * y[j];
            }
            y[i] = s / self.band[i * w + bw];
        }
        y
    }
}

/// Deterministic solver bound to one operator and grid.
#[derive(Clone, Debug, PartialEq)]
pub enum FdSolver {
    Identity { grid: Grid1D, points: PointSet },
    Poisson1D { grid: Grid1D, points: PointSet },
    DivForm1D { grid: Grid1D, points: PointSet },
    AllenCahn2D {
        grid: Grid2D,
        points: PointSet,
        cubic: f64,
        newton: NewtonOptions,
    },
}

impl FdSolver {
    /// Solver for `spec.operator` with `n` points per axis.
    pub fn for_problem(spec: &ProblemSpec, n: usize) -> Result<Self> {
        let (a, b) = spec.domain.bounds();
        Ok(match spec.operator {
            OperatorId::Identity if spec.domain.dim() == 1 => {
                let grid = Grid1D::new(a, b, n)?;
                FdSolver::Identity {
                    points: grid.points(),
                    grid,
                }
            }
            OperatorId::Identity => {
                return Err(Error::invalid("reference", "identity reference is 1-d only"));
            }
            OperatorId::NegLaplace1D => {
                let grid = Grid1D::new(a, b, n)?;
                FdSolver::Poisson1D {
                    points: grid.points(),
                    grid,
                }
            }
            OperatorId::DivForm1D => {
                let grid = Grid1D::new(a, b, n)?;
                FdSolver::DivForm1D {
                    points: grid.points(),
                    grid,
                }
            }
            OperatorId::AllenCahn2D { cubic } => {
                let grid = Grid2D::new(a, b, n)?;
                FdSolver::AllenCahn2D {
                    points: grid.points(),
                    grid,
                    cubic,
                    newton: NewtonOptions::default(),
                }
            }
        })
    }

    /// Boundary grid indices.
    pub fn boundary(&self) -> Vec<usize> {
        match self {
            FdSolver::Identity { grid, .. } | FdSolver::Poisson1D { grid, .. } | FdSolver::DivForm1D { grid, .. } => {
                vec![0, grid.n - 1]
            }
            FdSolver::AllenCahn2D { grid, .. } => (0..grid.n() * grid.n()).filter(|&i| grid.on_boundary(i)).collect(),
        }
    }

    fn sampler(&self, spec: &GpSpec) -> Result<GpSampler> {
        match self {
            FdSolver::AllenCahn2D { grid, .. } => GpSampler::tensor_grid(spec, grid.axis.a, grid.axis.b, grid.n()),
            _ => GpSampler::new(spec, self.grid()),
        }
    }
}

impl FieldSolver for FdSolver {
    fn grid(&self) -> &PointSet {
        match self {
            FdSolver::Identity { points, .. }
            | FdSolver::Poisson1D { points, .. }
            | FdSolver::DivForm1D { points, .. }
            | FdSolver::AllenCahn2D { points, .. } => points,
        }
    }

    fn solve(&self, k: Option<&[f64]>, f: &[f64]) -> Result<Vec<f64>> {
        match self {
            FdSolver::Identity { grid, .. } => {
                check_dim(grid.n, f.len())?;
                Ok(f.to_vec())
            }
            FdSolver::Poisson1D { grid, .. } => solve_poisson_1d(f, (0.0, 0.0), grid),
            FdSolver::DivForm1D { grid, .. } => {
                let k = k.ok_or(Error::MissingParameterField("div_form_1d needs k"))?;
                solve_divform_1d(k, f, (0.0, 0.0), grid)
            }
            FdSolver::AllenCahn2D {
                grid, cubic, newton, ..
            } => {
                let c = k.unwrap_or(std::slice::from_ref(cubic));
                Ok(solve_allen_cahn_2d(f, grid, c, newton)?.u)
            }
        }
    }

    fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        match self {
            FdSolver::Identity { grid, .. } | FdSolver::Poisson1D { grid, .. } | FdSolver::DivForm1D { grid, .. } => {
                grid.interpolate(values, x[0])
            }
            FdSolver::AllenCahn2D { grid, .. } => grid.interpolate(values, x),
        }
    }
}

/// Covariance restricted to a subset of grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct CovBlock {
    pub indices: Vec<usize>,
    pub matrix: SymMatrix,
}

/// Pointwise reference statistics of a field on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceStats {
    pub grid: PointSet,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub cov: Option<CovBlock>,
    /// Monte Carlo samples used; `0` for closed-form references.
    pub n_mc: usize,
    pub seed: u64,
}

impl ReferenceStats {
    /// Monte Carlo standard error of the mean, `std / √n_mc`.
    pub fn std_error(&self) -> Vec<f64> {
        let s = (self.n_mc.max(1) as f64).sqrt();
        self.std.iter().map(|v| v / s).collect()
    }

    /// Linear interpolation of mean and STD onto 1-d points.
    pub fn at_1d(&self, xs: &PointSet) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(1, self.grid.dim())?;
        let c = self.grid.coords();
        let grid = Grid1D::new(c[0], c[c.len() - 1], c.len())?;
        Ok((
            xs.iter().map(|x| grid.interpolate(&self.mean, x[0])).collect(),
            xs.iter().map(|x| grid.interpolate(&self.std, x[0])).collect(),
        ))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# n_mc={} seed={}", self.n_mc, self.seed)?;
        let axes = ["x", "y", "z"];
        let head: Vec<&str> = axes.iter().take(self.grid.dim()).copied().collect();
        writeln!(w, "{},mean,std", head.join(","))?;
        for (i, p) in self.grid.iter().enumerate() {
            for c in p {
                write!(w, "{c:?},")?;
            }
            writeln!(w, "{:?},{:?}", self.mean[i], self.std[i])?;
        }
        Ok(())
    }
}

/// Closed-form mean, STD and covariance of a (transformed) GP on a grid.
pub fn analytic_reference(spec: &GpSpec, grid: &PointSet) -> ReferenceStats {
    let mean = grid.iter().map(|x| spec.analytic_mean(x)).collect();
    let std = grid.iter().map(|x| spec.analytic_std(x)).collect();
    let matrix = SymMatrix::from_fn(grid.len(), |i, j| spec.analytic_cov(grid.point(i), grid.point(j)));
    ReferenceStats {
        grid: grid.clone(),
        mean,
        std,
        cov: Some(CovBlock {
            indices: (0..grid.len()).collect(),
            matrix,
        }),
        n_mc: 0,
        seed: 0,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// STD of noise added to boundary values of each solve.
    pub boundary_noise: f64,
    /// Grid indices on which to accumulate a covariance.
    pub cov_indices: Option<Vec<usize>>,
}

#[derive(Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    /// Co-moments on the covariance subset, full `c × c`.
    co: Vec<f64>,
}

impl Moments {
    fn new(g: usize, c: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; g],
            m2: vec![0.0; g],
            co: vec![0.0; c * c],
        }
    }

    fn push(&mut self, x: &[f64], idx: &[usize], delta: &mut Vec<f64>) {
        self.n += 1.0;
        let c = idx.len();
        delta.clear();
        delta.extend(idx.iter().map(|&i| x[i] - self.mean[i]));
        for (i, v) in x.iter().enumerate() {
            let d = v - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (v - self.mean[i]);
        }
        for a in 0..c {
            let after = x[idx[a]] - self.mean[idx[a]];
            for b in 0..c {
                self.co[a * c + b] += after * delta[b];
            }
        }
    }

    /// Pools means and second moments; co-moments are pooled separately by
    /// [`combined_comoments`].
    fn merge(mut self, o: &Moments) -> Self {
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let f = self.n * o.n / n;
        for i in 0..self.mean.len() {
            let d = o.mean[i] - self.mean[i];
            self.m2[i] += o.m2[i] + d * d * f;
            self.mean[i] += d * o.n / n;
        }
        self.n = n;
        self
    }
}

const MC_CHUNK: usize = 64;

/// Monte Carlo statistics of the solution: per sample, draw `k` and `f` on
/// the solver grid, solve, and add boundary noise.
pub fn mc_reference(
    spec: &ProblemSpec,
    solver: &FdSolver,
    n_mc: usize,
    rng: &mut Rng,
    opts: &McOptions,
) -> Result<ReferenceStats> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc", "must be at least 1"));
    }
    let f_sampler = solver.sampler(&spec.f_spec)?;
    let k_sampler = spec.k_spec.as_ref().map(|k| solver.sampler(k)).transpose()?;
    let grid = solver.grid().clone();
    let g = grid.len();
    let idx = opts.cov_indices.clone().unwrap_or_default();
    if let Some(&bad) = idx.iter().find(|&&i| i >= g) {
        return Err(Error::IndexOutOfRange { index: bad, len: g });
    }
    let boundary = solver.boundary();
    let seed = rng.seed();
    let base = rng.split("mc");
    let n_chunks = n_mc.div_ceil(MC_CHUNK);
    let parts = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<Moments> {
            let mut m = Moments::new(g, idx.len());
            let mut delta = Vec::new();
            for j in c * MC_CHUNK..((c + 1) * MC_CHUNK).min(n_mc) {
                let mut r = base.split_index("sample", j as u64);
                let k = k_sampler.as_ref().map(|s| s.draw(&mut r));
                let f = f_sampler.draw(&mut r);
                let mut u = solver.solve(k.as_deref(), &f).map_err(|e| Error::SolverFailed {
                    sample: j,
                    source: Box::new(e),
                })?;
                if opts.boundary_noise > 0.0 {
                    for &b in &boundary {
                        u[b] += opts.boundary_noise * r.standard_normal();
                    }
                }
                m.push(&u, &idx, &mut delta);
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = parts
        .iter()
        .fold(Moments::new(g, idx.len()), |acc, p| acc.merge(p));
    let n = total.n;
    let std = total.m2.iter().map(|v| (v / n).max(0.0).sqrt()).collect();
    let cov = (!idx.is_empty()).then(|| {
        let c = idx.len();
        let co = combined_comoments(&parts, &idx);
        CovBlock {
            indices: idx.clone(),
            matrix: SymMatrix::from_fn(c, |a, b| co[a * c + b] / n),
        }
    });
    Ok(ReferenceStats {
        grid,
        mean: total.mean,
        std,
        cov,
        n_mc,
        seed,
    })
}

/// Merges per-chunk co-moments about the pooled mean.
fn combined_comoments(parts: &[Moments], idx: &[usize]) -> Vec<f64> {
    let c = idx.len();
    let mut n = 0.0;
    let mut mean = vec![0.0; c];
    let mut co = vec![0.0; c * c];
    for p in parts {
        if p.n == 0.0 {
            continue;
        }
        let pm: Vec<f64> = idx.iter().map(|&i| p.mean[i]).collect();
        let tot = n + p.n;
        let d: Vec<f64> = pm.iter().zip(&mean).map(|(b, a)| b - a).collect();
        let f = n * p.n / tot;
        for a in 0..c {
            for b in 0..c {
                co[a * c + b] += p.co[a * c + b] + d[a] * d[b] * f;
            }
        }
        for a in 0..c {
            mean[a] += d[a] * p.n / tot;
        }
        n = tot;
    }
    co
}
