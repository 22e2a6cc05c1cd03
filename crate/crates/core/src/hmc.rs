//! Hamiltonian Monte Carlo with a fixed step size and trajectory length.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::Rng;

/// Unnormalized log-density with gradient, `log p = −V`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, z: &[f64]) -> Result<f64>;

    fn log_density_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    /// Iterations discarded before recording (`L`).
    pub burn_in: usize,
    /// Recorded samples (`N`).
    pub n_samples: usize,
    /// Leapfrog steps per proposal (`M`).
    pub leapfrog_steps: usize,
    /// Leapfrog step size (`δ`).
    pub step_size: f64,
    pub seed: u64,
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("hmc.n_samples", "must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("hmc.step_size", format!("{} is not positive", self.step_size)));
        }
        Ok(())
    }
}

/// Output of [`sample`]. Proposal-level records cover burn-in as well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcChain {
    /// Recorded states, one per post-burn-in iteration; empty when the chain
    /// was run through [`sample_with`].
    pub samples: Vec<Vec<f64>>,
    pub accept_flags: Vec<bool>,
    /// `H(z, r) − H(z′, r′)` per proposal.
    pub hamiltonian_errors: Vec<f64>,
    pub log_density: Vec<f64>,
    pub burn_in: usize,
    pub wall_time_per_sample: f64,
}

impl HmcChain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.accept_flags.is_empty() {
            return 0.0;
        }
        self.accept_flags.iter().filter(|&&a| a).count() as f64 / self.accept_flags.len() as f64
    }
}

const CHAIN_MAGIC: &[u8; 8] = b"SPDECHN1";

/// Proposal bookkeeping stored after the sample block of a checkpoint.
#[derive(Serialize, Deserialize)]
struct ChainMeta {
    accept_flags: Vec<bool>,
    hamiltonian_errors: Vec<f64>,
    log_density: Vec<f64>,
    burn_in: usize,
    wall_time_per_sample: f64,
}

impl HmcChain {
    /// Writes a checkpoint: magic, sample count and dimension as `u64`, the
    /// samples as little-endian `f64` rows, then a length-prefixed JSON
    /// block with the proposal records.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let d = self.samples.first().map_or(0, |s| s.len());
        if let Some(s) = self.samples.iter().find(|s| s.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
        w.write_all(CHAIN_MAGIC)?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        w.write_all(&(d as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * d);
        for s in &self.samples {
            buf.clear();
            s.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
            w.write_all(&buf)?;
        }
        let meta = serde_json::to_vec(&ChainMeta {
            accept_flags: self.accept_flags.clone(),
            hamiltonian_errors: self.hamiltonian_errors.clone(),
            log_density: self.log_density.clone(),
            burn_in: self.burn_in,
            wall_time_per_sample: self.wall_time_per_sample,
        })?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHAIN_MAGIC {
            return Err(Error::format("chain checkpoint", "bad magic"));
        }
        let n = read_u64(&mut r)? as usize;
        let d = read_u64(&mut r)? as usize;
        let mut buf = vec![0u8; 8 * d];
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            samples.push(
                buf.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        let len = read_u64(&mut r)? as usize;
        let mut meta = vec![0u8; len];
        r.read_exact(&mut meta)?;
        let meta: ChainMeta = serde_json::from_slice(&meta)?;
        Ok(HmcChain {
            samples,
            accept_flags: meta.accept_flags,
            hamiltonian_errors: meta.hamiltonian_errors,
            log_density: meta.log_density,
            burn_in: meta.burn_in,
            wall_time_per_sample: meta.wall_time_per_sample,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Runs `M` leapfrog steps on `V` from `(z, r)`, computing `∇V` through
/// `grad_v`.
pub fn leapfrog(
    mut grad_v: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    z: &[f64],
    r: &[f64],
    m: usize,
    delta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(z.len(), r.len())?;
    let mut z = z.to_vec();
    let mut r = r.to_vec();
    if m == 0 {
        return Ok((z, r));
    }
    let mut g = grad_v(&z)?;
    for _ in 0..m {
        step(&mut z, &mut r, &mut g, delta, &mut grad_v)?;
    }
    Ok((z, r))
}

/// One half-kick / drift / half-kick triplet; `g` holds `∇V(z)` on entry
/// and on exit.
fn step(
    z: &mut [f64],
    r: &mut [f64],
    g: &mut Vec<f64>,
    delta: f64,
    grad_v: &mut impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<()> {
    for (ri, gi) in r.iter_mut().zip(g.iter()) {
        *ri -= 0.5 * delta * gi;
    }
    for (zi, ri) in z.iter_mut().zip(r.iter()) {
        *zi += delta * ri;
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { iteration: 0 });
    }
    *g = grad_v(z)?;
    for (ri, gi) in r.iter_mut().zip(g.iter()) {
        *ri -= 0.5 * delta * gi;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { iteration: 0 });
    }
    Ok(())
}

/// Samples `target` and keeps every post-burn-in state.
pub fn sample(target: &dyn LogDensity, cfg: &HmcConfig, theta0: &[f64]) -> Result<HmcChain> {
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut chain = sample_with(target, cfg, theta0, |_, z| {
        samples.push(z.to_vec());
        Ok(())
    })?;
    chain.samples = samples;
    Ok(chain)
}

/// Samples `target`, handing each post-burn-in state to `observe` instead
/// of storing it.
pub fn sample_with(
    target: &dyn LogDensity,
    cfg: &HmcConfig,
    theta0: &[f64],
    mut observe: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<HmcChain> {
    cfg.validate()?;
    check_dim(target.dim(), theta0.len())?;
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { iteration: 0 });
    }
    let base = Rng::new(cfg.seed);
    let mut momentum = base.split("momentum");
    let mut accept_rng = base.split("accept");
    let d = target.dim();
    let total = cfg.burn_in + cfg.n_samples;

    let mut z = theta0.to_vec();
    let (mut logp, mut grad) = target.log_density_and_grad(&z)?;
    if !logp.is_finite() {
        return Err(Error::NonFiniteState { iteration: 0 });
    }
    let mut accept_flags = Vec::with_capacity(total);
    let mut errors = Vec::with_capacity(total);
    let mut log_density = Vec::with_capacity(total);
    let mut r = vec![0.0; d];
    let start = Instant::now();
    for it in 0..total {
        momentum.fill_standard_normal(&mut r);
        let h0 = -logp + 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        let mut z1 = z.clone();
        // `grad_v` is ∇V = −∇log p.
        let mut g1: Vec<f64> = grad.iter().map(|v| -v).collect();
        let mut logp1 = logp;
        let mut grad_v = |x: &[f64]| -> Result<Vec<f64>> {
            let (lp, g) = target.log_density_and_grad(x)?;
            logp1 = lp;
            Ok(g.into_iter().map(|v| -v).collect())
        };
        for _ in 0..cfg.leapfrog_steps {
            step(&mut z1, &mut r, &mut g1, cfg.step_size, &mut grad_v)
                .map_err(|e| at_iteration(e, it))?;
        }
        let h1 = -logp1 + 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        if !h1.is_finite() {
            return Err(Error::NonFiniteState { iteration: it });
        }
        let dh = h0 - h1;
        let u = accept_rng.uniform();
        let accept = dh >= 0.0 || u < dh.exp();
        if accept {
            z = z1;
            logp = logp1;
            grad = g1.into_iter().map(|v| -v).collect();
        }
        accept_flags.push(accept);
        errors.push(dh);
        log_density.push(logp);
        if it >= cfg.burn_in {
            observe(it - cfg.burn_in, &z)?;
        }
    }
    Ok(HmcChain {
        samples: Vec::new(),
        accept_flags,
        hamiltonian_errors: errors,
        log_density,
        burn_in: cfg.burn_in,
        wall_time_per_sample: start.elapsed().as_secs_f64() / total as f64,
    })
}

/// Runs one chain per starting point in parallel. Chain `i` uses the seed
/// derived from `cfg.seed` under index `i`.
pub fn sample_chains(target: &dyn LogDensity, cfg: &HmcConfig, starts: &[Vec<f64>]) -> Result<Vec<HmcChain>> {
    use rayon::prelude::*;
    let base = Rng::new(cfg.seed);
    starts
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let cfg = HmcConfig {
                seed: base.split_index("chain", i as u64).seed(),
                ..cfg.clone()
            };
            sample(target, &cfg, t)
        })
        .collect()
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFiniteState { .. } => Error::NonFiniteState { iteration },
        e => e,
    }
}

/// Largest Hessian eigenvalue of `V = −log p` near `theta`, and the
/// leapfrog step size `2/√λ` above which the integrator is unstable along
/// that direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    pub lambda_max: f64,
    pub critical_step: f64,
}

/// Power iteration on finite-difference Hessian-vector products of `V`.
/// Accurate only near a mode, where the Hessian is positive semidefinite.
pub fn curvature(target: &dyn LogDensity, theta: &[f64], iterations: usize) -> Result<Curvature> {
    check_dim(target.dim(), theta.len())?;
    let d = theta.len();
    let (_, g0) = target.log_density_and_grad(theta)?;
    let mut v: Vec<f64> = (0..d).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
    let scale = theta.iter().fold(1.0f64, |m, t| m.max(t.abs()));
    let eps = 1e-7 * scale;
    let mut lambda = 0.0;
    for _ in 0..iterations.max(1) {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= n);
        let shifted: Vec<f64> = theta.iter().zip(&v).map(|(t, x)| t + eps * x).collect();
        let (_, g1) = target.log_density_and_grad(&shifted)?;
        v = g1.iter().zip(&g0).map(|(a, b)| -(a - b) / eps).collect();
        lambda = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    Ok(Curvature {
        lambda_max: lambda,
        critical_step: if lambda > 0.0 { 2.0 / lambda.sqrt() } else { f64::INFINITY },
    })
}

/// Summary statistics of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub acceptance_rate: f64,
    pub mean_abs_dh: f64,
    pub max_abs_dh: f64,
    /// Effective sample size per coordinate of the stored samples.
    pub ess: Vec<f64>,
    pub min_ess: f64,
    /// Some coordinate never moved.
    pub degenerate: bool,
    pub wall_time_per_sample: f64,
}

pub fn diagnostics(chain: &HmcChain) -> Result<Diagnostics> {
    if chain.accept_flags.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n = chain.hamiltonian_errors.len() as f64;
    let abs_dh = chain.hamiltonian_errors.iter().map(|v| v.abs());
    let mean_abs_dh = abs_dh.clone().sum::<f64>() / n;
    let max_abs_dh = abs_dh.fold(0.0, f64::max);
    let d = chain.samples.first().map_or(0, |s| s.len());
    let mut ess = Vec::with_capacity(d);
    let mut degenerate = false;
    let mut series = vec![0.0; chain.samples.len()];
    for j in 0..d {
        for (x, s) in series.iter_mut().zip(&chain.samples) {
            *x = s[j];
        }
        let e = effective_sample_size(&series);
        degenerate |= e.degenerate;
        ess.push(e.ess);
    }
    Ok(Diagnostics {
        acceptance_rate: chain.acceptance_rate(),
        mean_abs_dh,
        max_abs_dh,
        min_ess: ess.iter().copied().fold(f64::INFINITY, f64::min),
        ess,
        degenerate,
        wall_time_per_sample: chain.wall_time_per_sample,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ess {
    pub ess: f64,
    /// The series has (numerically) zero variance.
    pub degenerate: bool,
}

/// Effective sample size by Geyer's initial monotone sequence estimator,
/// with autocovariances from an FFT. A constant series reports `1`.
pub fn effective_sample_size(x: &[f64]) -> Ess {
    let n = x.len();
    if n < 4 {
        return Ess {
            ess: n as f64,
            degenerate: false,
        };
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= (1e-14 * scale).powi(2) {
        return Ess {
            ess: 1.0,
            degenerate: true,
        };
    }
    let acov = autocovariance(x, mean);
    let rho = |t: usize| acov[t] / acov[0];
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / (n as f64).log10());
    Ess {
        ess: n as f64 / tau,
        degenerate: false,
    }
}

fn autocovariance(x: &[f64], mean: f64) -> Vec<f64> {
    let n = x.len();
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(m)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (m as f64 * n as f64)).collect()
}
