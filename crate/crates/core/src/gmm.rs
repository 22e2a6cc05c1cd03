//! Gaussian-mixture density estimation by expectation–maximization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{Cholesky, Matrix, Rng, SymMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Weights below this abort the fit.
pub const MIN_WEIGHT: f64 = 1e-12;
const SCATTER_BLOCK: usize = 256;

/// Default regularization relative to the mean diagonal of the data
/// covariance.
pub const DEFAULT_REG_REL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub n_components: usize,
    /// Ridge added to every covariance; `None` uses
    /// [`DEFAULT_REG_REL`] times the mean data variance.
    pub reg: Option<f64>,
    pub max_iter: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tol: f64,
    /// Fit in per-coordinate standardized space and map back.
    pub standardize: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            n_components: 1,
            reg: None,
            max_iter: 500,
            tol: 1e-8,
            standardize: false,
        }
    }
}

impl EmOptions {
    pub fn with_components(n_components: usize) -> Self {
        Self {
            n_components,
            ..Self::default()
        }
    }
}

/// `Σ_i w_i N(m_i, Σ_i)` with full covariances.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    factors: Vec<Cholesky>,
    /// `ln w_i − ½ ln det Σ_i − (d/2) ln 2π`.
    log_norm: Vec<f64>,
    /// Mean log-likelihood after each E-step of the fit.
    history: Vec<f64>,
}

/// Outcome of [`GaussianMixture::fit_em`] bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitInfo {
    pub iterations: usize,
    pub reg: f64,
    pub log_likelihood: f64,
}

impl GaussianMixture {
    /// Builds a mixture from explicit parameters.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<SymMatrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("gmm.n_components", "must be at least 1"));
        }
        check_dim(weights.len(), means.len())?;
        check_dim(weights.len(), covs.len())?;
        let factors = covs
            .iter()
            .map(|c| Cholesky::factor_auto(c, 1e-12))
            .collect::<Result<Vec<_>>>()?;
        Self::from_factors(weights, means, factors)
    }

    fn from_factors(weights: Vec<f64>, means: Vec<Vec<f64>>, factors: Vec<Cholesky>) -> Result<Self> {
        let dim = means[0].len();
        for (m, f) in means.iter().zip(&factors) {
            check_dim(dim, m.len())?;
            check_dim(dim, f.n())?;
        }
        let total: f64 = weights.iter().sum();
        if let Some((i, &w)) = weights.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
            return Err(Error::DegenerateComponent { component: i, weight: w });
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("gmm weights", format!("sum to {total}, not 1")));
        }
        let log_norm = weights
            .iter()
            .zip(&factors)
            .map(|(w, f)| w.ln() - 0.5 * f.log_det() - 0.5 * dim as f64 * LN_2PI)
            .collect();
        Ok(Self {
            dim,
            weights,
            means,
            factors,
            log_norm,
            history: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn factor(&self, i: usize) -> &Cholesky {
        &self.factors[i]
    }

    pub fn covariance(&self, i: usize) -> SymMatrix {
        self.factors[i].reconstruct()
    }

    /// Mean log-likelihood recorded after every E-step of the fit.
    pub fn log_likelihood_history(&self) -> &[f64] {
        &self.history
    }

    /// Per-component log terms `ln w_i + ln N(x; m_i, Σ_i)` and whitened
    /// residuals `L_i⁻¹(x − m_i)`.
    fn component_terms(&self, x: &[f64], whitened: &mut [Vec<f64>], terms: &mut [f64]) {
        for (i, ((m, f), y)) in self.means.iter().zip(&self.factors).zip(whitened.iter_mut()).enumerate() {
            y.clear();
            y.extend(x.iter().zip(m).map(|(a, b)| a - b));
            f.solve_lower_in_place(y);
            terms[i] = self.log_norm[i] - 0.5 * y.iter().map(|v| v * v).sum::<f64>();
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let mut whitened = vec![Vec::with_capacity(self.dim); self.n_components()];
        let mut terms = vec![0.0; self.n_components()];
        self.component_terms(x, &mut whitened, &mut terms);
        Ok(log_sum_exp(&terms))
    }

    pub fn grad_log_pdf(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_pdf_and_grad(x)?.1)
    }

    /// `(log p(x), ∇ log p(x))` sharing one pass of triangular solves.
    pub fn log_pdf_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim, x.len())?;
        let nc = self.n_components();
        let mut whitened = vec![Vec::with_capacity(self.dim); nc];
        let mut terms = vec![0.0; nc];
        self.component_terms(x, &mut whitened, &mut terms);
        let lse = log_sum_exp(&terms);
        let mut grad = vec![0.0; self.dim];
        for (i, y) in whitened.iter_mut().enumerate() {
            let r = (terms[i] - lse).exp();
            if r == 0.0 {
                continue;
            }
            self.factors[i].solve_upper_in_place(y);
            for (g, v) in grad.iter_mut().zip(y.iter()) {
                *g -= r * v;
            }
        }
        Ok((lse, grad))
    }

    /// Posterior component probabilities for one point.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut whitened = vec![Vec::with_capacity(self.dim); self.n_components()];
        let mut terms = vec![0.0; self.n_components()];
        self.component_terms(x, &mut whitened, &mut terms);
        let lse = log_sum_exp(&terms);
        Ok(terms.iter().map(|t| (t - lse).exp()).collect())
    }

    /// Fits a mixture to the rows of `data` by EM, seeding with k-means++.
    ///
    /// Iteration stops once the mean log-likelihood gains less than `tol`.
    /// A step that loses likelihood is discarded and the previous iterate is
    /// returned.
    pub fn fit_em(data: &Matrix, opts: &EmOptions, rng: &mut Rng) -> Result<(Self, FitInfo)> {
        let (n, d) = (data.rows(), data.cols());
        if n == 0 || d == 0 {
            return Err(Error::EmptyData);
        }
        if opts.n_components == 0 {
            return Err(Error::invalid("gmm.n_components", "must be at least 1"));
        }
        if opts.n_components > n {
            return Err(Error::invalid(
                "gmm.n_components",
                format!("{} components for {n} rows", opts.n_components),
            ));
        }
        if let Some(r) = opts.reg {
            if !(r >= 0.0) {
                return Err(Error::invalid("gmm.reg", "must be non-negative"));
            }
        }
        let (work, shift, scale) = if opts.standardize {
            standardize(data)
        } else {
            (data.clone(), vec![0.0; d], vec![1.0; d])
        };
        let reg = match opts.reg {
            Some(r) => r,
            None => {
                let (_, var) = column_moments(&work);
                DEFAULT_REG_REL * var.iter().sum::<f64>() / d as f64
            }
        };
        if n <= d && reg == 0.0 {
            return Err(Error::invalid("gmm.reg", "must be positive when rows ≤ dimension"));
        }

        let centers = kmeans_pp(&work, opts.n_components, rng);
        let mut resp = vec![0.0; n * opts.n_components];
        for (j, row) in work.iter_rows().enumerate() {
            let best = centers
                .iter()
                .enumerate()
                .map(|(c, &ci)| (c, sq_dist(row, work.row(ci))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .expect("at least one center");
            resp[j * opts.n_components + best] = 1.0;
        }

        let mut model = m_step(&work, &resp, opts.n_components, reg)?;
        let mut history = vec![model.e_step(&work, &mut resp)];
        let mut iterations = 1;
        while iterations < opts.max_iter {
            let next = m_step(&work, &resp, opts.n_components, reg)?;
            let ll = next.e_step(&work, &mut resp);
            let prev = history[history.len() - 1];
            iterations += 1;
            // The +reg·I fixed point is not a stationary point of the
            // likelihood, so the last approach to it can lose a little.
            if ll < prev {
                break;
            }
            model = next;
            history.push(ll);
            if ll - prev < opts.tol {
                break;
            }
        }
        let log_likelihood = *history.last().expect("one E-step");
        let mut model = if opts.standardize {
            model.unstandardize(&shift, &scale)?
        } else {
            model
        };
        model.history = history;
        Ok((
            model,
            FitInfo {
                iterations,
                reg,
                log_likelihood,
            },
        ))
    }

    /// Fills `resp` (row-major `n × N_c`) and returns the mean
    /// log-likelihood.
    fn e_step(&self, data: &Matrix, resp: &mut [f64]) -> f64 {
        let nc = self.n_components();
        let mut lse = vec![0.0; data.rows()];
        resp.par_chunks_mut(nc)
            .zip(lse.par_iter_mut())
            .enumerate()
            .for_each_init(
                || (vec![Vec::with_capacity(self.dim); nc], vec![0.0; nc]),
                |(whitened, terms), (j, (r, out))| {
                    self.component_terms(data.row(j), whitened, terms);
                    let l = log_sum_exp(terms);
                    for (ri, t) in r.iter_mut().zip(terms.iter()) {
                        *ri = (t - l).exp();
                    }
                    *out = l;
                },
            );
        let total: f64 = lse.iter().sum();
        total / data.rows() as f64
    }

    fn unstandardize(self, shift: &[f64], scale: &[f64]) -> Result<Self> {
        let means = self
            .means
            .iter()
            .map(|m| m.iter().zip(shift).zip(scale).map(|((v, s), c)| s + c * v).collect())
            .collect();
        let factors = self
            .factors
            .iter()
            .map(|f| {
                let n = f.n();
                let mut l = f.lower().to_vec();
                for i in 0..n {
                    for v in &mut l[i * n..i * n + i + 1] {
                        *v *= scale[i];
                    }
                }
                Cholesky::from_parts(n, l, f.jitter())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_factors(self.weights, means, factors)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GmmFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GmmFile = serde_json::from_str(s)?;
        file.into_model()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk form: covariances are stored as packed lower-triangular Cholesky
/// rows `L[0][0], L[1][0], L[1][1], …`.
#[derive(Serialize, Deserialize)]
struct GmmFile {
    format: String,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    cholesky_lower: Vec<Vec<f64>>,
    log_likelihood_history: Vec<f64>,
}

const GMM_FORMAT: &str = "spdebnn-gmm-1";

impl From<&GaussianMixture> for GmmFile {
    fn from(g: &GaussianMixture) -> Self {
        let n = g.dim;
        let cholesky_lower = g
            .factors
            .iter()
            .map(|f| (0..n).flat_map(|i| f.row(i).to_vec()).collect())
            .collect();
        Self {
            format: GMM_FORMAT.into(),
            dim: n,
            weights: g.weights.clone(),
            means: g.means.clone(),
            cholesky_lower,
            log_likelihood_history: g.history.clone(),
        }
    }
}

impl GmmFile {
    fn into_model(self) -> Result<GaussianMixture> {
        if self.format != GMM_FORMAT {
            return Err(Error::format("gmm file", format!("unknown format {:?}", self.format)));
        }
        let n = self.dim;
        if self.weights.is_empty() {
            return Err(Error::format("gmm file", "no components"));
        }
        check_dim(self.weights.len(), self.cholesky_lower.len())?;
        let factors = self
            .cholesky_lower
            .iter()
            .map(|packed| {
                check_dim(n * (n + 1) / 2, packed.len())?;
                let mut l = vec![0.0; n * n];
                let mut k = 0;
                for i in 0..n {
                    l[i * n..i * n + i + 1].copy_from_slice(&packed[k..k + i + 1]);
                    k += i + 1;
                }
                Cholesky::from_parts(n, l, 0.0)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = GaussianMixture::from_factors(self.weights, self.means, factors)?;
        g.history = self.log_likelihood_history;
        Ok(g)
    }
}

fn m_step(data: &Matrix, resp: &[f64], nc: usize, reg: f64) -> Result<GaussianMixture> {
    let (n, d) = (data.rows(), data.cols());
    let mut weights = Vec::with_capacity(nc);
    let mut means = Vec::with_capacity(nc);
    let mut factors = Vec::with_capacity(nc);
    for c in 0..nc {
        let nk: f64 = (0..n).map(|j| resp[j * nc + c]).sum();
        let w = nk / n as f64;
        if !(w >= MIN_WEIGHT) {
            return Err(Error::DegenerateComponent { component: c, weight: w });
        }
        let mut mean = vec![0.0; d];
        for (j, row) in data.iter_rows().enumerate() {
            let r = resp[j * nc + c];
            if r != 0.0 {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += r * x;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        // Fixed row blocks summed in order keep the result independent of
        // the thread count.
        let blocks: Vec<Vec<f64>> = (0..n.div_ceil(SCATTER_BLOCK))
            .into_par_iter()
            .map(|b| {
                let mut acc = vec![0.0; d * d];
                let mut y = vec![0.0; d];
                for j in b * SCATTER_BLOCK..((b + 1) * SCATTER_BLOCK).min(n) {
                    let r = resp[j * nc + c];
                    if r == 0.0 {
                        continue;
                    }
                    for ((yi, x), m) in y.iter_mut().zip(data.row(j)).zip(&mean) {
                        *yi = x - m;
                    }
                    for i in 0..d {
                        let s = r * y[i];
                        for (a, v) in acc[i * d..i * d + i + 1].iter_mut().zip(&y[..=i]) {
                            *a += s * v;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut scatter = vec![0.0; d * d];
        for b in &blocks {
            scatter.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        let mut cov = SymMatrix::from_fn(d, |i, j| scatter[i * d + j] / nk);
        cov.add_diag(reg);
        factors.push(Cholesky::factor_auto(&cov, 1e-12)?);
        weights.push(w);
        means.push(mean);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GaussianMixture::from_factors(weights, means, factors)
}

fn kmeans_pp(data: &Matrix, k: usize, rng: &mut Rng) -> Vec<usize> {
    let n = data.rows();
    let mut centers = vec![rng.below(n)];
    let mut d2: Vec<f64> = data.iter_rows().map(|r| sq_dist(r, data.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.uniform() * total;
            let mut pick = n - 1;
            for (j, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = j;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.below(n)
        };
        centers.push(next);
        for (j, r) in data.iter_rows().enumerate() {
            d2[j] = d2[j].min(sq_dist(r, data.row(next)));
        }
    }
    centers
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn column_moments(data: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (data.rows() as f64, data.cols());
    let mut mean = vec![0.0; d];
    for r in data.iter_rows() {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in data.iter_rows() {
        for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

fn standardize(data: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (mean, var) = column_moments(data);
    let scale: Vec<f64> = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    let mut out = data.clone();
    for j in 0..out.rows() {
        for ((x, m), s) in out.row_mut(j).iter_mut().zip(&mean).zip(&scale) {
            *x = (*x - m) / s;
        }
    }
    (out, mean, scale)
}

/// `ln Σ exp(tᵢ)` without overflow.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
