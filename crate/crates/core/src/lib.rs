//! Uncertainty quantification for stochastic PDEs with Bayesian neural
//! network surrogates.
//!
//! The pipeline mirrors the usual data-driven workflow:
//!
//! 1. [`problem`] synthesizes snapshot datasets of random inputs (and, for
//!    inverse problems, solutions) observed on sensors.
//! 2. [`gmm`] fits a Gaussian mixture to the joint sensor vectors.
//! 3. [`ffn`] defines a multiscale Fourier-feature network surrogate;
//!    [`residual`] maps it to the same sensor vector through the PDE
//!    operator, and [`posterior`] scores it under the mixture plus a
//!    standard-normal prior.
//! 4. [`hmc`] samples network parameters from that posterior.
//! 5. [`estimator`] turns parameter samples into field statistics, which
//!    are compared against Monte Carlo finite-difference references from
//!    [`reference`].

pub mod error;
pub mod estimator;
pub mod ffn;
pub mod gmm;
pub mod gp;
pub mod hmc;
pub mod numerics;
pub mod posterior;
pub mod problem;
pub mod reference;
pub mod residual;

pub use error::{Error, Result};
pub use estimator::{FieldSamples, FieldSelector};
pub use ffn::{DerivOrder, EvalBundle, FfnArch, FfnParams, HeadArch, HeadSpec};
pub use gmm::{EmOptions, GaussianMixture};
pub use gp::{GpSpec, Kernel, KernelKind, MeanFn, Transform};
pub use hmc::{HmcChain, HmcConfig, LogDensity};
pub use numerics::{Matrix, PointSet, Rng, SymMatrix};
pub use posterior::{MapOptions, Posterior};
pub use problem::{Domain, Mode, OperatorId, ProblemSpec, SensorLayout, SnapshotDataset};
pub use reference::{FdSolver, ReferenceStats};
pub use residual::ResidualVector;
