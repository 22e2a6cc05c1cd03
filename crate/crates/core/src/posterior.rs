//! Log-posterior of network parameters: mixture likelihood of the residual
//! vector plus an isotropic Gaussian prior.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::ffn::{FfnArch, FfnParams};
use crate::gmm::GaussianMixture;
use crate::hmc::LogDensity;
use crate::problem::{ProblemSpec, SensorLayout};
use crate::residual::ResidualMap;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug)]
enum Likelihood {
    Mixture {
        mixture: GaussianMixture,
        map: ResidualMap,
    },
    PriorOnly,
}

/// `log p(θ | 𝒟) = log p_GMM(residual(θ)) + log N(θ; 0, s²I)`.
#[derive(Clone, Debug)]
pub struct Posterior {
    likelihood: Likelihood,
    arch: FfnArch,
    prior_std: f64,
}

impl Posterior {
    pub fn new(mixture: GaussianMixture, spec: &ProblemSpec, layout: &SensorLayout, arch: FfnArch) -> Result<Self> {
        let map = ResidualMap::new(spec, layout, &arch)?;
        check_dim(map.len(), mixture.dim())?;
        Ok(Self {
            likelihood: Likelihood::Mixture { mixture, map },
            arch,
            prior_std: 1.0,
        })
    }

    /// The prior alone, for diagnostics.
    pub fn prior_only(arch: FfnArch) -> Self {
        Self {
            likelihood: Likelihood::PriorOnly,
            arch,
            prior_std: 1.0,
        }
    }

    pub fn with_prior_std(mut self, prior_std: f64) -> Result<Self> {
        if !(prior_std > 0.0) {
            return Err(Error::invalid("prior_std", "must be positive"));
        }
        self.prior_std = prior_std;
        Ok(self)
    }

    pub fn arch(&self) -> &FfnArch {
        &self.arch
    }

    pub fn prior_std(&self) -> f64 {
        self.prior_std
    }

    pub fn dim(&self) -> usize {
        self.arch.dim_theta()
    }

    pub fn residual_map(&self) -> Option<&ResidualMap> {
        match &self.likelihood {
            Likelihood::Mixture { map, .. } => Some(map),
            Likelihood::PriorOnly => None,
        }
    }

    pub fn mixture(&self) -> Option<&GaussianMixture> {
        match &self.likelihood {
            Likelihood::Mixture { mixture, .. } => Some(mixture),
            Likelihood::PriorOnly => None,
        }
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let d = theta.len() as f64;
        let s2 = self.prior_std * self.prior_std;
        -0.5 * theta.iter().map(|v| v * v).sum::<f64>() / s2 - d * self.prior_std.ln() - 0.5 * d * LN_2PI
    }

    /// Log-likelihood term alone.
    pub fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        match &self.likelihood {
            Likelihood::Mixture { mixture, map } => {
                let r = map.evaluate(&self.arch, &FfnParams::new(theta.to_vec()))?;
                mixture.log_pdf(&r.values)
            }
            Likelihood::PriorOnly => Ok(0.0),
        }
    }

    pub fn log_post(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.log_likelihood(theta)? + self.log_prior(theta))
    }

    pub fn grad_log_post(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_post_and_grad(theta)?.1)
    }

    pub fn log_post_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), theta.len())?;
        let s2 = self.prior_std * self.prior_std;
        let mut grad: Vec<f64> = theta.iter().map(|v| -v / s2).collect();
        let mut value = self.log_prior(theta);
        if let Likelihood::Mixture { mixture, map } = &self.likelihood {
            let params = FfnParams::new(theta.to_vec());
            let (r, tapes) = map.evaluate_with_tapes(&self.arch, &params)?;
            let (lp, adjoint) = mixture.log_pdf_and_grad(&r.values)?;
            value += lp;
            map.pullback_into(&self.arch, &params, &tapes, &adjoint, &mut grad)?;
        }
        Ok((value, grad))
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        Posterior::dim(self)
    }

    fn log_density(&self, z: &[f64]) -> Result<f64> {
        self.log_post(z)
    }

    fn log_density_and_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.log_post_and_grad(z)
    }
}

/// Adam ascent on the log-posterior, used to start chains near a mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Learning rate decays geometrically to this fraction by the end.
    pub final_lr_fraction: f64,
    /// Factor on the prior draw a run starts the ascent from; callers of
    /// [`map_estimate`] apply it themselves.
    #[serde(default = "unit")]
    pub init_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-3,
            final_lr_fraction: 0.1,
            init_scale: 1.0,
        }
    }
}

/// Returns the best iterate and its log-posterior.
pub fn map_estimate(target: &dyn LogDensity, theta0: &[f64], opts: &MapOptions) -> Result<(Vec<f64>, f64)> {
    check_dim(target.dim(), theta0.len())?;
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let d = theta0.len();
    let mut theta = theta0.to_vec();
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut best = (theta.clone(), f64::NEG_INFINITY);
    let decay = if opts.iterations > 1 {
        opts.final_lr_fraction.ln() / (opts.iterations - 1) as f64
    } else {
        0.0
    };
    for t in 0..opts.iterations {
        let (lp, g) = target.log_density_and_grad(&theta)?;
        if lp > best.1 {
            best = (theta.clone(), lp);
        }
        let lr = opts.learning_rate * (decay * t as f64).exp();
        let (c1, c2) = (1.0 - pow_t(b1, t + 1), 1.0 - pow_t(b2, t + 1));
        for i in 0..d {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            theta[i] += lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }
    let lp = target.log_density(&theta)?;
    if lp > best.1 {
        best = (theta, lp);
    }
    Ok(best)
}

fn pow_t(b: f64, t: usize) -> f64 {
    b.powi(t.min(i32::MAX as usize) as i32)
}
