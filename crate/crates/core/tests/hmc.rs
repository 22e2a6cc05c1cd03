mod common;

use common::small_posterior;
use spdebnn_core::hmc::{self, diagnostics, effective_sample_size, leapfrog};
use spdebnn_core::{HmcConfig, LogDensity, OperatorId, Result, Rng};

/// Gaussian with precision matrix `p` (row-major).
struct Gaussian {
    d: usize,
    p: Vec<f64>,
}

impl Gaussian {
    fn standard(d: usize) -> Self {
        let mut p = vec![0.0; d * d];
        (0..d).for_each(|i| p[i * d + i] = 1.0);
        Self { d, p }
    }
}

impl LogDensity for Gaussian {
    fn dim(&self) -> usize {
        self.d
    }
    fn log_density(&self, z: &[f64]) -> Result<f64> {
        Ok(self.log_density_and_grad(z)?.0)
    }
    fn log_density_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let g: Vec<f64> = (0..self.d)
            .map(|i| -(0..self.d).map(|j| self.p[i * self.d + j] * z[j]).sum::<f64>())
            .collect();
        Ok((0.5 * g.iter().zip(z).map(|(a, b)| a * b).sum::<f64>(), g))
    }
}

/// `V(z) = (z² − 1)²`.
struct DoubleWell;

impl LogDensity for DoubleWell {
    fn dim(&self) -> usize {
        1
    }
    fn log_density(&self, z: &[f64]) -> Result<f64> {
        Ok(-(z[0] * z[0] - 1.0).powi(2))
    }
    fn log_density_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let v = z[0] * z[0] - 1.0;
        Ok((-v * v, vec![-4.0 * z[0] * v]))
    }
}

fn cfg(burn_in: usize, n: usize, m: usize, delta: f64, seed: u64) -> HmcConfig {
    HmcConfig { burn_in, n_samples: n, leapfrog_steps: m, step_size: delta, seed }
}

fn grad_v<'a>(t: &'a dyn LogDensity) -> impl FnMut(&[f64]) -> Result<Vec<f64>> + 'a {
    move |z| Ok(t.log_density_and_grad(z)?.1.into_iter().map(|v| -v).collect())
}

fn hamiltonian(t: &dyn LogDensity, z: &[f64], r: &[f64]) -> f64 {
    -t.log_density(z).unwrap() + 0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn standard_normal_moments() {
    let t = Gaussian::standard(10);
    let chain = hmc::sample(&t, &cfg(500, 5000, 20, 0.2, 51), &[0.5; 10]).unwrap();
    assert_eq!(chain.samples.len(), 5000);
    assert!(chain.acceptance_rate() > 0.6);
    let n = chain.samples.len() as f64;
    for j in 0..10 {
        let m = chain.samples.iter().map(|s| s[j]).sum::<f64>() / n;
        let v = chain.samples.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / n;
        assert!(m.abs() < 0.1, "mean {m}");
        assert!((v - 1.0).abs() < 0.15, "var {v}");
    }
}

#[test]
fn correlated_gaussian_covariance() {
    // Precision of [[1, 0.9], [0.9, 1]].
    let det = 1.0 - 0.81;
    let t = Gaussian { d: 2, p: vec![1.0 / det, -0.9 / det, -0.9 / det, 1.0 / det] };
    let chain = hmc::sample(&t, &cfg(500, 8000, 15, 0.1, 52), &[0.0, 0.0]).unwrap();
    let n = chain.samples.len() as f64;
    let m: Vec<f64> = (0..2).map(|j| chain.samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
    let c = |i: usize, j: usize| chain.samples.iter().map(|s| (s[i] - m[i]) * (s[j] - m[j])).sum::<f64>() / n;
    let want = [1.0, 0.9, 0.9, 1.0];
    let got = [c(0, 0), c(0, 1), c(1, 0), c(1, 1)];
    let num: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(num / den < 0.1, "{got:?}");
}

#[test]
fn leapfrog_is_time_reversible_on_network_posteriors() {
    let mut rng = Rng::new(53);
    for (seed, op) in [(1, OperatorId::Identity), (2, OperatorId::NegLaplace1D)] {
        let (p, _, _) = small_posterior(seed, op, 2);
        let z: Vec<f64> = (0..p.dim()).map(|_| 0.3 * rng.standard_normal()).collect();
        let r: Vec<f64> = (0..p.dim()).map(|_| rng.standard_normal()).collect();
        let delta = 2e-3;
        let (z1, r1) = leapfrog(grad_v(&p), &z, &r, 25, delta).unwrap();
        let back: Vec<f64> = r1.iter().map(|v| -v).collect();
        let (z2, r2) = leapfrog(grad_v(&p), &z1, &back, 25, delta).unwrap();
        for i in 0..z.len() {
            assert!((z2[i] - z[i]).abs() < 1e-10, "z {}", (z2[i] - z[i]).abs());
            assert!((r2[i] + r[i]).abs() < 1e-10, "r {}", (r2[i] + r[i]).abs());
        }
    }
}

#[test]
fn energy_error_is_second_order() {
    let t = Gaussian::standard(10);
    let mut rng = Rng::new(54);
    let mut mean = [0.0; 2];
    let trials = 400;
    for _ in 0..trials {
        let z: Vec<f64> = (0..10).map(|_| rng.standard_normal()).collect();
        let r: Vec<f64> = (0..10).map(|_| rng.standard_normal()).collect();
        let h0 = hamiltonian(&t, &z, &r);
        for (k, delta) in [0.2, 0.1].into_iter().enumerate() {
            let (z1, r1) = leapfrog(grad_v(&t), &z, &r, 20, delta).unwrap();
            mean[k] += (hamiltonian(&t, &z1, &r1) - h0).abs() / trials as f64;
        }
    }
    let ratio = mean[0] / mean[1];
    assert!((2.5..=6.0).contains(&ratio), "{ratio}");
}

#[test]
fn double_well_histogram() {
    let chain = hmc::sample(&DoubleWell, &cfg(1000, 100_000, 10, 0.15, 55), &[1.0]).unwrap();
    let (a, b, bins) = (-2.5, 2.5, 50);
    let w = (b - a) / bins as f64;
    // Bin masses by composite Simpson quadrature.
    let dens = |x: f64| (-(x * x - 1.0f64).powi(2)).exp();
    let simpson = |lo: f64, hi: f64| {
        let k = 64;
        let h = (hi - lo) / k as f64;
        (0..=k)
            .map(|i| {
                let c = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                c * dens(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    let z = simpson(-6.0, 6.0);
    let mut hist = vec![0.0; bins];
    let mut outside = 0.0;
    for s in &chain.samples {
        let i = ((s[0] - a) / w).floor();
        if i >= 0.0 && (i as usize) < bins {
            hist[i as usize] += 1.0;
        } else {
            outside += 1.0;
        }
    }
    let n = chain.samples.len() as f64;
    let mut tv = outside / n;
    let mut inside_mass = 0.0;
    for (i, h) in hist.iter().enumerate() {
        let p = simpson(a + i as f64 * w, a + (i + 1) as f64 * w) / z;
        inside_mass += p;
        tv += (h / n - p).abs();
    }
    tv = 0.5 * (tv + (1.0 - inside_mass));
    assert!(tv < 0.05, "{tv}");
}

#[test]
fn iid_effective_sample_size() {
    let mut rng = Rng::new(56);
    let x: Vec<f64> = (0..2000).map(|_| rng.standard_normal()).collect();
    let e = effective_sample_size(&x);
    assert!(!e.degenerate);
    assert!((e.ess / 2000.0 - 1.0).abs() < 0.2, "{}", e.ess);
}

#[test]
fn autoregressive_effective_sample_size() {
    let mut rng = Rng::new(57);
    let rho: f64 = 0.5;
    let n = 20_000;
    let mut x = vec![0.0; n];
    for i in 1..n {
        x[i] = rho * x[i - 1] + (1.0 - rho * rho).sqrt() * rng.standard_normal();
    }
    let want = n as f64 * (1.0 - rho) / (1.0 + rho);
    let e = effective_sample_size(&x).ess;
    assert!((e / want - 1.0).abs() < 0.2, "{e} vs {want}");
}

#[test]
fn zero_steps_accepts_everything_in_place() {
    let t = Gaussian::standard(3);
    let z0 = [0.3, -0.1, 2.0];
    let chain = hmc::sample(&t, &cfg(5, 20, 0, 0.1, 58), &z0).unwrap();
    assert_eq!(chain.acceptance_rate(), 1.0);
    assert!(chain.hamiltonian_errors.iter().all(|e| *e == 0.0));
    assert!(chain.samples.iter().all(|s| s == &z0));
    assert_eq!(diagnostics(&chain).unwrap().acceptance_rate, 1.0);
    assert!(diagnostics(&chain).unwrap().degenerate);
}

#[test]
fn chains_are_seed_deterministic() {
    let (p, _, _) = small_posterior(3, OperatorId::NegLaplace1D, 2);
    let z0 = vec![0.1; p.dim()];
    let c = cfg(3, 10, 5, 1e-3, 59);
    let a = hmc::sample(&p, &c, &z0).unwrap();
    let b = hmc::sample(&p, &c, &z0).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.accept_flags, b.accept_flags);
    let other = hmc::sample(&p, &HmcConfig { seed: 60, ..c }, &z0).unwrap();
    assert_ne!(a.samples, other.samples);
}
