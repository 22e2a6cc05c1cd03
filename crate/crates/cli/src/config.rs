//! Experiment configuration, presets and TOML overrides.
//!
//! A config file is a TOML document whose tables mirror
//! [`ExperimentConfig`]. It names a `preset` (and optionally a `scale`);
//! every other key overrides the preset value at the same path, so a file
//! holding only
//!
//! ```toml
//! preset = "poisson32"
//! [problem.f_spec.kernel]
//! length = 0.03
//! ```
//!
//! runs the Poisson preset with a shorter correlation length.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spdebnn_core::gp::{GpSpec, Kernel, MeanFn, Transform};
use spdebnn_core::problem::{Domain, Mode, OperatorId, ProblemSpec, SensorLayout};
use spdebnn_core::{EmOptions, FieldSelector, HeadSpec, MapOptions, PointSet};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[value(name = "process31")]
    Process31,
    #[value(name = "poisson32")]
    Poisson32,
    #[value(name = "poisson32_hifreq")]
    Poisson32Hifreq,
    #[value(name = "allencahn33")]
    Allencahn33,
    #[value(name = "elliptic34")]
    Elliptic34,
    #[value(name = "elliptic34_hifreq")]
    Elliptic34Hifreq,
    /// Starts from the `poisson32` values; meant to be overridden.
    #[value(name = "custom")]
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Process31,
        Preset::Poisson32,
        Preset::Poisson32Hifreq,
        Preset::Allencahn33,
        Preset::Elliptic34,
        Preset::Elliptic34Hifreq,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Process31 => "process31",
            Preset::Poisson32 => "poisson32",
            Preset::Poisson32Hifreq => "poisson32_hifreq",
            Preset::Allencahn33 => "allencahn33",
            Preset::Elliptic34 => "elliptic34",
            Preset::Elliptic34Hifreq => "elliptic34_hifreq",
            Preset::Custom => "custom",
        }
    }
}

/// `paper` uses the published experiment sizes; `desk` shrinks them to run
/// on a workstation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }
}

/// Sensor counts. In 1-d, `f` and `u` are equidistant including both
/// endpoints and `g` is 0 or 2 (the endpoints). In 2-d, `f` is the number
/// of points per axis of a tensor grid and `g` the number per side of the
/// square boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub f: usize,
    pub g: usize,
    pub u: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `N_ω`.
    pub n_snapshots: usize,
    /// Points of the finite-difference grid used to synthesize inverse
    /// data.
    pub solver_grid: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// One entry per head: `U`, then `K` when the problem has one.
    pub heads: Vec<HeadSpec>,
    pub prior_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcSection {
    pub burn_in: usize,
    pub n_samples: usize,
    pub leapfrog_steps: usize,
    pub step_size: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Closed-form statistics of the field's own Gaussian process.
    Analytic,
    /// Finite-difference Monte Carlo over the random inputs.
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    /// Solver grid points per axis (Monte Carlo only).
    pub grid: usize,
    pub n_mc: usize,
    pub boundary_noise: f64,
}

/// Which Gaussian process a predicted kernel is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSource {
    F,
    K,
}

/// Compares the sample covariance of a field with a prescribed kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub field: FieldSelector,
    /// Compare `ln(field − shift)` with the latent kernel. Without it the
    /// field is compared with the exact covariance of the transformed
    /// process.
    pub log_shift: Option<f64>,
    pub against: KernelSource,
    /// Leading eigenvalues reported and compared.
    pub n_eigenvalues: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub field: FieldSelector,
    /// Evaluation points per axis.
    pub grid: usize,
    pub kernel: Option<KernelConfig>,
    /// Grid for the KL dimension in the summary; 0 skips it.
    pub kl_grid: usize,
    pub kl_energy: f64,
    /// Number of sample counts in the running-error trace.
    pub running_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub scale: Scale,
    /// Every stage seed derives from this one.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub sensors: SensorConfig,
    pub data: DataConfig,
    pub gmm: EmOptions,
    pub network: NetworkConfig,
    /// Adam warm start of the chain; 0 iterations starts from a prior draw.
    pub map: MapOptions,
    pub hmc: HmcSection,
    pub reference: ReferenceConfig,
    pub eval: EvalConfig,
}

fn interval() -> Domain {
    Domain::Interval { a: -1.0, b: 1.0 }
}

fn head(features: usize, scales: [f64; 2], hidden: usize) -> HeadSpec {
    HeadSpec {
        features,
        scales: scales.to_vec(),
        hidden: vec![hidden],
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset, scale: Scale) -> Self {
        let paper = scale == Scale::Paper;
        let pick = |p: usize, d: usize| if paper { p } else { d };
        let hidden = pick(200, 100);
        let n_snapshots = pick(20_000, 2_000);
        let n_samples = pick(4_000, 1_000);
        let map = |iterations| MapOptions {
            iterations,
            learning_rate: 1e-2,
            final_lr_fraction: 0.01,
            init_scale: 0.1,
        };
        let hmc = |m: usize, delta: f64| HmcSection {
            burn_in: 1_000,
            n_samples,
            leapfrog_steps: m,
            step_size: delta,
        };
        let mc = |grid, n_mc| ReferenceConfig {
            kind: ReferenceKind::MonteCarlo,
            grid,
            n_mc,
            boundary_noise: 0.01,
        };
        let analytic = ReferenceConfig {
            kind: ReferenceKind::Analytic,
            grid: 0,
            n_mc: 0,
            boundary_noise: 0.0,
        };
        let kernel = |field, log_shift, against| {
            Some(KernelConfig {
                field,
                log_shift,
                against,
                n_eigenvalues: 5,
            })
        };
        let eval = |field, grid, kernel| EvalConfig {
            field,
            grid,
            kernel,
            kl_grid: 2048,
            kl_energy: 0.99,
            running_points: 12,
        };
        let gmm = |n_components| EmOptions {
            n_components,
            ..EmOptions::default()
        };
        let data = DataConfig {
            n_snapshots,
            solver_grid: 401,
        };

        match preset {
            Preset::Process31 => Self {
                preset,
                scale,
                seed: 1,
                output_dir: None,
                problem: ProblemSpec {
                    operator: OperatorId::Identity,
                    mode: Mode::Forward,
                    domain: interval(),
                    f_spec: GpSpec::new(
                        MeanFn::SinPi(1.0),
                        Kernel::squared_exponential(0.1, 0.1),
                        Transform::LogShift(0.5),
                    ),
                    k_spec: None,
                    boundary_value: 0.0,
                    noise_std: 0.0,
                },
                sensors: SensorConfig { f: 41, g: 0, u: 0 },
                data,
                gmm: gmm(3),
                network: NetworkConfig {
                    heads: vec![head(7, [1.0, 5.0], hidden)],
                    prior_std: 1.0,
                },
                map: map(3_000),
                hmc: hmc(100, 1e-3),
                reference: analytic,
                eval: eval(
                    FieldSelector::U,
                    41,
                    kernel(FieldSelector::U, None, KernelSource::F),
                ),
            },
            Preset::Poisson32 | Preset::Poisson32Hifreq | Preset::Custom => {
                let hifreq = preset == Preset::Poisson32Hifreq;
                let length = if hifreq { 0.03 } else { 0.1 };
                Self {
                    preset,
                    scale,
                    seed: 1,
                    output_dir: None,
                    problem: ProblemSpec {
                        operator: OperatorId::NegLaplace1D,
                        mode: Mode::Forward,
                        domain: interval(),
                        f_spec: GpSpec::new(MeanFn::SinPi(10.0), Kernel::matern52(1.0, length), Transform::None),
                        k_spec: None,
                        boundary_value: 0.0,
                        noise_std: 0.01,
                    },
                    sensors: SensorConfig {
                        f: if hifreq { 101 } else { 41 },
                        g: 2,
                        u: 0,
                    },
                    data,
                    gmm: gmm(1),
                    network: NetworkConfig {
                        heads: vec![head(10, [1.0, if hifreq { 10.0 } else { 7.0 }], hidden)],
                        prior_std: 1.0,
                    },
                    map: map(6_000),
                    hmc: hmc(100, 1e-4),
                    reference: mc(401, pick(500_000, 10_000)),
                    eval: eval(
                        FieldSelector::U,
                        101,
                        kernel(FieldSelector::F, None, KernelSource::F),
                    ),
                }
            }
            Preset::Allencahn33 => Self {
                preset,
                scale,
                seed: 1,
                output_dir: None,
                problem: ProblemSpec {
                    operator: OperatorId::AllenCahn2D { cubic: 3.0 },
                    mode: Mode::Forward,
                    domain: Domain::Square { a: -1.0, b: 1.0 },
                    f_spec: GpSpec::new(
                        MeanFn::ProductSinPi2D(20.0),
                        Kernel::squared_exponential(1.0, 0.1),
                        Transform::None,
                    ),
                    k_spec: None,
                    boundary_value: 0.0,
                    noise_std: 0.01,
                },
                sensors: SensorConfig { f: 21, g: 20, u: 0 },
                data,
                gmm: gmm(1),
                network: NetworkConfig {
                    heads: vec![head(50, [1.0, 5.0], hidden)],
                    prior_std: 1.0,
                },
                map: map(6_000),
                hmc: hmc(2_000, 5e-6),
                reference: mc(101, pick(100_000, 2_000)),
                eval: EvalConfig {
                    kl_grid: 0,
                    ..eval(FieldSelector::U, 21, None)
                },
            },
            Preset::Elliptic34 | Preset::Elliptic34Hifreq => {
                let hifreq = preset == Preset::Elliptic34Hifreq;
                let length = if hifreq { 0.03 } else { 0.1 };
                let sensors = if hifreq { 201 } else { 41 };
                let scales = [1.0, if hifreq { 20.0 } else { 5.0 }];
                Self {
                    preset,
                    scale,
                    seed: 1,
                    output_dir: None,
                    problem: ProblemSpec {
                        operator: OperatorId::DivForm1D,
                        mode: Mode::Inverse,
                        domain: interval(),
                        f_spec: GpSpec::new(
                            MeanFn::Constant(3.0),
                            Kernel::squared_exponential(0.3, length),
                            Transform::None,
                        ),
                        k_spec: Some(GpSpec::new(
                            MeanFn::SinPi(1.0),
                            Kernel::squared_exponential(0.1, length),
                            Transform::LogShift(0.5),
                        )),
                        boundary_value: 0.0,
                        noise_std: 0.0,
                    },
                    sensors: SensorConfig {
                        f: sensors,
                        g: 0,
                        u: sensors,
                    },
                    data,
                    gmm: gmm(3),
                    network: NetworkConfig {
                        heads: vec![head(10, scales, hidden), head(10, scales, hidden)],
                        prior_std: 1.0,
                    },
                    map: map(6_000),
                    hmc: if hifreq { hmc(2_000, 5e-6) } else { hmc(300, 3e-5) },
                    reference: analytic,
                    eval: eval(
                        FieldSelector::K,
                        sensors,
                        kernel(FieldSelector::K, None, KernelSource::K),
                    ),
                }
            }
        }
    }

    /// Reads a TOML config and layers it over its named preset.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |reason: String| CliError::Parse {
            path: path.to_path_buf(),
            reason,
        };
        let user: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let preset: Preset = match user.get("preset") {
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?,
            None => return Err(CliError::validation("preset", "the config file must name a preset")),
        };
        let scale: Scale = match user.get("scale") {
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?,
            None => Scale::Desk,
        };
        let mut base = toml::Table::try_from(Self::preset(preset, scale)).map_err(|e| parse_err(e.to_string()))?;
        merge(&mut base, user);
        base.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Checks every knob before any compute; errors name the offending
    /// config path.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: &str| Err(CliError::validation(field, reason));
        if self.seed > i64::MAX as u64 {
            return fail("seed", "must fit in a signed 64-bit TOML integer");
        }
        if self.gmm.n_components == 0 {
            return fail("gmm.n_components", "must be at least 1");
        }
        if self.gmm.max_iter == 0 {
            return fail("gmm.max_iter", "must be at least 1");
        }
        if self.data.n_snapshots == 0 {
            return fail("data.n_snapshots", "must be at least 1");
        }
        if self.data.n_snapshots < self.gmm.n_components {
            return fail("data.n_snapshots", "fewer snapshots than mixture components");
        }
        if self.hmc.n_samples == 0 {
            return fail("hmc.n_samples", "must be at least 1");
        }
        if !(self.hmc.step_size > 0.0 && self.hmc.step_size.is_finite()) {
            return fail("hmc.step_size", "must be positive and finite");
        }
        if !(self.network.prior_std > 0.0) {
            return fail("network.prior_std", "must be positive");
        }
        let want_heads = if self.problem.has_k_head() { 2 } else { 1 };
        if self.network.heads.len() != want_heads {
            return Err(CliError::validation(
                "network.heads",
                format!("the problem needs {want_heads} head(s), found {}", self.network.heads.len()),
            ));
        }
        for (i, h) in self.network.heads.iter().enumerate() {
            if h.features == 0 || h.scales.is_empty() || h.hidden.is_empty() || h.hidden.contains(&0) {
                return Err(CliError::validation(
                    format!("network.heads[{i}]"),
                    "needs features, at least one scale and non-zero hidden widths",
                ));
            }
        }
        if self.map.iterations > 0 && !(self.map.learning_rate > 0.0) {
            return fail("map.learning_rate", "must be positive");
        }
        if self.map.iterations > 0 && !(self.map.final_lr_fraction > 0.0) {
            return fail("map.final_lr_fraction", "must be positive");
        }
        if self.eval.grid < 2 {
            return fail("eval.grid", "needs at least 2 points per axis");
        }
        if self.eval.running_points == 0 {
            return fail("eval.running_points", "must be at least 1");
        }
        if self.eval.kl_grid > 0 && !(self.eval.kl_energy > 0.0 && self.eval.kl_energy < 1.0) {
            return fail("eval.kl_energy", "must lie in (0, 1)");
        }
        if let Some(k) = &self.eval.kernel {
            if k.against == KernelSource::K && self.problem.k_spec.is_none() {
                return fail("eval.kernel.against", "the problem has no k process");
            }
            if matches!(k.field, FieldSelector::K | FieldSelector::KLatent) && !self.problem.has_k_head() {
                return fail("eval.kernel.field", "the network has no parameter head");
            }
        }
        if matches!(self.eval.field, FieldSelector::K | FieldSelector::KLatent) && !self.problem.has_k_head() {
            return fail("eval.field", "the network has no parameter head");
        }
        match self.reference.kind {
            ReferenceKind::MonteCarlo => {
                if self.reference.n_mc == 0 {
                    return fail("reference.n_mc", "must be at least 1");
                }
                if self.reference.grid < 3 {
                    return fail("reference.grid", "needs at least 3 points per axis");
                }
                if self.problem.mode == Mode::Inverse {
                    return fail("reference.kind", "Monte Carlo references are for forward problems");
                }
                if self.eval.field != FieldSelector::U {
                    return fail("eval.field", "a Monte Carlo reference describes the solution field u");
                }
            }
            ReferenceKind::Analytic => {
                if self.analytic_process().is_none() {
                    return fail(
                        "reference.kind",
                        "no closed form for this field; use monte_carlo or evaluate u of the identity operator or k",
                    );
                }
            }
        }
        if !(self.reference.boundary_noise >= 0.0) {
            return fail("reference.boundary_noise", "must be non-negative");
        }
        if self.problem.mode == Mode::Inverse && self.data.solver_grid < 3 {
            return fail("data.solver_grid", "needs at least 3 points");
        }
        self.problem
            .validate()
            .map_err(|e| CliError::validation("problem", e.to_string()))?;
        let layout = self.layout()?;
        self.problem
            .check_layout(&layout)
            .map_err(|e| CliError::validation("sensors", e.to_string()))?;
        Ok(())
    }

    /// The Gaussian process whose closed form describes `eval.field`.
    pub fn analytic_process(&self) -> Option<&GpSpec> {
        match (self.eval.field, self.problem.operator) {
            (FieldSelector::U, OperatorId::Identity) => Some(&self.problem.f_spec),
            (FieldSelector::K, _) => self.problem.k_spec.as_ref(),
            _ => None,
        }
    }

    pub fn layout(&self) -> Result<SensorLayout> {
        let (a, b) = self.problem.domain.bounds();
        let s = &self.sensors;
        match self.problem.domain.dim() {
            1 => {
                let g = match s.g {
                    0 => PointSet::empty(1),
                    2 => PointSet::from_1d(vec![a, b]),
                    _ => return Err(CliError::validation("sensors.g", "1-d problems take 0 or 2 boundary sensors")),
                };
                let u = if s.u > 0 {
                    PointSet::linspace(a, b, s.u)
                } else {
                    PointSet::empty(1)
                };
                if s.f < 2 {
                    return Err(CliError::validation("sensors.f", "needs at least 2 sensors"));
                }
                Ok(SensorLayout::new(PointSet::linspace(a, b, s.f), g, PointSet::empty(1), u))
            }
            _ => {
                if s.u > 0 {
                    return Err(CliError::validation("sensors.u", "2-d problems take no u sensors"));
                }
                if s.f < 2 {
                    return Err(CliError::validation("sensors.f", "needs at least 2 points per axis"));
                }
                let g = if s.g > 0 {
                    PointSet::square_boundary(a, b, s.g)
                } else {
                    PointSet::empty(2)
                };
                Ok(SensorLayout::new(
                    PointSet::tensor_grid(a, b, s.f),
                    g,
                    PointSet::empty(2),
                    PointSet::empty(2),
                ))
            }
        }
    }

    /// Evaluation grid with `eval.grid` points per axis.
    pub fn eval_grid(&self) -> PointSet {
        let (a, b) = self.problem.domain.bounds();
        match self.problem.domain.dim() {
            1 => PointSet::linspace(a, b, self.eval.grid),
            _ => PointSet::tensor_grid(a, b, self.eval.grid),
        }
    }
}

/// Recursively overlays `over` onto `base`; tables merge, everything else
/// replaces.
pub fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
