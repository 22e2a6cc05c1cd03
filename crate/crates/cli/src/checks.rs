//! Self-checks run by `spdebnn check`: finite-difference gradients of every
//! preset posterior and leapfrog time reversal.

use serde::Serialize;
use spdebnn_core::gmm::GaussianMixture;
use spdebnn_core::hmc::leapfrog;
use spdebnn_core::posterior::Posterior;
use spdebnn_core::{FfnArch, Rng};

use crate::config::{ExperimentConfig, Preset, Scale};
use crate::error::{Result, Stage, StageExt};
use crate::pipeline::{synthesize, Seeds};

pub const GRADIENT_TOL: f64 = 1e-5;
pub const REVERSIBILITY_TOL: f64 = 1e-10;

/// Presets with a distinct posterior; `custom` repeats `poisson32`.
pub const EXPERIMENT_PRESETS: [Preset; 6] = [
    Preset::Process31,
    Preset::Poisson32,
    Preset::Poisson32Hifreq,
    Preset::Allencahn33,
    Preset::Elliptic34,
    Preset::Elliptic34Hifreq,
];

/// `preset` at desk scale shrunk so that `θ` has at most 2,000 entries.
pub fn reduced(preset: Preset) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(preset, Scale::Desk);
    cfg.data.n_snapshots = 500;
    cfg.data.solver_grid = 201;
    cfg.gmm.max_iter = 50;
    for h in &mut cfg.network.heads {
        h.hidden = vec![16];
    }
    cfg
}

/// Posterior of a config without writing any artifacts.
pub fn build_posterior(cfg: &ExperimentConfig) -> Result<Posterior> {
    cfg.validate()?;
    let seeds = Seeds::new(cfg.seed);
    let dataset = synthesize(cfg, &seeds)?;
    let (gmm, _) = GaussianMixture::fit_em(&dataset.rows, &cfg.gmm, &mut seeds.stream("gmm")).stage(Stage::Fit)?;
    let arch = FfnArch::sample(cfg.problem.domain.dim(), &cfg.network.heads, &mut seeds.stream("arch"))
        .stage(Stage::Network)?;
    Posterior::new(gmm, &cfg.problem, &cfg.layout()?, arch)
        .and_then(|p| p.with_prior_std(cfg.network.prior_std))
        .stage(Stage::Network)
}

#[derive(Clone, Debug, Serialize)]
pub struct GradientCheck {
    pub preset: String,
    pub dim: usize,
    pub n_points: usize,
    /// Worst `|FD − analytic| / ‖∇‖` over all probes.
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Compares `∇ log p` with central differences at `n_points` prior draws,
/// along random unit directions and single coordinates. Errors are
/// relative to the gradient norm at that point.
pub fn gradient_check(preset: Preset, n_points: usize, seed: u64) -> Result<GradientCheck> {
    let cfg = reduced(preset);
    let post = build_posterior(&cfg)?;
    let d = post.dim();
    let mut rng = Rng::new(seed).split(preset.name());
    let mut worst = 0.0f64;
    for _ in 0..n_points {
        let theta = post.arch().prior_sample(&mut rng).theta;
        let (_, g) = post.log_post_and_grad(&theta).stage(Stage::Compare)?;
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let mut probes: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let mut v = vec![0.0; d];
                rng.fill_standard_normal(&mut v);
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= n);
                v
            })
            .collect();
        for _ in 0..5 {
            let mut e = vec![0.0; d];
            e[rng.below(d)] = 1.0;
            probes.push(e);
        }
        for v in &probes {
            let fd = directional_fd(&post, &theta, v)?;
            let an: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
            worst = worst.max((fd - an).abs() / gnorm);
        }
    }
    Ok(GradientCheck {
        preset: preset.name().to_string(),
        dim: d,
        n_points,
        max_rel_error: worst,
        pass: worst < GRADIENT_TOL,
    })
}

/// Fourth-order central difference of `log p` along `v`.
fn directional_fd(post: &Posterior, theta: &[f64], v: &[f64]) -> Result<f64> {
    let h = 1e-4;
    let at = |s: f64| -> Result<f64> {
        let x: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + s * h * d).collect();
        post.log_post(&x).stage(Stage::Compare)
    };
    Ok((8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * h))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReversibilityCheck {
    pub preset: String,
    pub dim: usize,
    /// `max |z_back − z|` relative to `max(1, |z|_∞)`.
    pub max_error: f64,
    /// `|z_M − z|_∞` of the forward trajectory.
    pub displacement: f64,
    pub pass: bool,
}

/// Runs `M` leapfrog steps on a reduced preset posterior from a shrunken
/// prior draw, flips the momentum and runs back.
pub fn reversibility_check(preset: Preset, seed: u64) -> Result<ReversibilityCheck> {
    let cfg = reduced(preset);
    let post = build_posterior(&cfg)?;
    let mut rng = Rng::new(seed).split(preset.name());
    let z: Vec<f64> = post.arch().prior_sample(&mut rng).theta.iter().map(|v| 0.1 * v).collect();
    let mut r = vec![0.0; z.len()];
    rng.fill_standard_normal(&mut r);
    let grad_v = |x: &[f64]| -> spdebnn_core::Result<Vec<f64>> {
        Ok(post.grad_log_post(x)?.into_iter().map(|g| -g).collect())
    };
    let (m, delta) = (10, cfg.hmc.step_size);
    let (z1, r1) = leapfrog(grad_v, &z, &r, m, delta).stage(Stage::Sample)?;
    let back: Vec<f64> = r1.iter().map(|v| -v).collect();
    let (z2, r2) = leapfrog(grad_v, &z1, &back, m, delta).stage(Stage::Sample)?;
    let scale = |a: &[f64]| a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let dz = z2.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale(&z);
    let dr = r2.iter().zip(&r).fold(0.0f64, |m, (a, b)| m.max((a + b).abs())) / scale(&r);
    let max_error = dz.max(dr);
    Ok(ReversibilityCheck {
        preset: preset.name().to_string(),
        dim: z.len(),
        max_error,
        displacement: z1.iter().zip(&z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
        pass: max_error < REVERSIBILITY_TOL,
    })
}
