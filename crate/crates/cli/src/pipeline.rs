//! The end-to-end experiment: synthesize, fit, sample, estimate, compare.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use spdebnn_core::estimator::{
    cov_kernel, field_samples, kernel_eigenvalues, mean_std, rel_error, rel_error_matrix, running_errors,
    write_matrix_csv, write_stats_csv,
};
use spdebnn_core::gmm::GaussianMixture;
use spdebnn_core::gp::{gram, kl_dimension, Kernel};
use spdebnn_core::hmc::{self, Curvature, HmcChain, HmcConfig};
use spdebnn_core::posterior::{map_estimate, Posterior};
use spdebnn_core::problem::{synthesize_forward, synthesize_inverse, Mode, SnapshotDataset};
use spdebnn_core::reference::{analytic_reference, mc_reference, FdSolver, Grid2D, McOptions, ReferenceStats};
use spdebnn_core::{FfnArch, FieldSamples, FieldSelector, Matrix, PointSet, Rng, SymMatrix};

use crate::config::{ExperimentConfig, KernelSource, ReferenceKind};
use crate::error::{CliError, Result, Stage, StageExt};

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DATASET_FILE: &str = "dataset.csv";
pub const GMM_FILE: &str = "gmm.json";
pub const ARCH_FILE: &str = "arch.json";
pub const CHAIN_FILE: &str = "chain.bin";
/// Written before sampling so a diverged run still shows the step-size
/// limit.
pub const STABILITY_FILE: &str = "stability.json";
pub const FIELD_STATS_FILE: &str = "field_stats.csv";
pub const REFERENCE_FILE: &str = "reference.csv";
pub const REFERENCE_ON_GRID_FILE: &str = "reference_on_grid.csv";
pub const RUNNING_ERRORS_FILE: &str = "running_errors.csv";
pub const KERNEL_PRED_FILE: &str = "kernel_predicted.csv";
pub const KERNEL_EXACT_FILE: &str = "kernel_exact.csv";
pub const EIGENVALUES_FILE: &str = "eigenvalues.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub theta: usize,
    pub sensor_vector: usize,
    pub n_snapshots: usize,
    pub eval_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSummary {
    pub n_components: usize,
    pub iterations: usize,
    pub reg: f64,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub iterations: usize,
    pub log_post_start: f64,
    pub log_post: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcSummary {
    pub burn_in: usize,
    pub n_samples: usize,
    pub leapfrog_steps: usize,
    pub step_size: f64,
    pub acceptance_rate: f64,
    pub mean_abs_dh: f64,
    pub max_abs_dh: f64,
    pub min_ess: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryStd {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// Relative L2 error of the predicted mean.
    pub mean: f64,
    pub std: f64,
    /// STD error over grid points off the boundary.
    pub std_interior: f64,
    /// Predicted STD on boundary grid points.
    pub boundary_std: Option<BoundaryStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub kind: ReferenceKind,
    pub n_mc: usize,
    pub grid_points: usize,
    /// Largest Monte Carlo standard error of the reference mean.
    pub max_std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub field: FieldSelector,
    /// Frobenius relative error of the predicted covariance.
    pub rel_error: f64,
    pub predicted_eigenvalues: Vec<f64>,
    pub exact_eigenvalues: Vec<f64>,
    pub max_eigenvalue_rel_error: f64,
}

/// Wall-clock measurements; the only part of a summary that varies
/// between identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stages: BTreeMap<String, f64>,
    pub total: f64,
    /// Seconds per HMC iteration, burn-in included.
    pub wall_time_per_sample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub preset: String,
    pub scale: String,
    pub seed: u64,
    pub dims: Dims,
    /// Correlation length of the process the KL dimension describes.
    pub correlation_length: f64,
    pub kl_dimension: Option<usize>,
    pub gmm: GmmSummary,
    pub map: Option<MapSummary>,
    /// Curvature of the energy at the chain start.
    pub stability: Option<Curvature>,
    pub hmc: HmcSummary,
    pub errors: ErrorSummary,
    pub reference: ReferenceSummary,
    pub kernel: Option<KernelSummary>,
    pub timing: Timing,
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingArtifacts(path.clone()),
            _ => CliError::io(&path, e),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path,
            reason: e.to_string(),
        })
    }

    /// The summary with its timing zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing {
                stages: BTreeMap::new(),
                total: 0.0,
                wall_time_per_sample: 0.0,
            },
            ..self.clone()
        }
    }
}

/// Derives every stage seed from the top-level one.
pub struct Seeds(Rng);

impl Seeds {
    pub fn new(seed: u64) -> Self {
        Seeds(Rng::new(seed))
    }

    pub fn stream(&self, stage: &str) -> Rng {
        self.0.split(stage)
    }
}

struct Clock {
    start: Instant,
    stage: Instant,
    stages: BTreeMap<String, f64>,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            stage: now,
            stages: BTreeMap::new(),
        }
    }

    fn lap(&mut self, stage: Stage, progress: &mut dyn FnMut(Stage, f64)) {
        let t = self.stage.elapsed().as_secs_f64();
        *self.stages.entry(stage.to_string()).or_default() += t;
        progress(stage, t);
        self.stage = Instant::now();
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

/// Runs the experiment into `out_dir` and returns its summary.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    run_with(cfg, out_dir, &mut |_, _| {})
}

/// [`run`], reporting each finished stage and its duration in seconds.
pub fn run_with(cfg: &ExperimentConfig, out_dir: &Path, progress: &mut dyn FnMut(Stage, f64)) -> Result<RunSummary> {
    cfg.validate()?;
    let mut clock = Clock::new();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join(CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml()).map_err(io_err(&path))?;
    let seeds = Seeds::new(cfg.seed);
    let spec = &cfg.problem;
    let layout = cfg.layout()?;
    clock.lap(Stage::Config, progress);

    let dataset = synthesize(cfg, &seeds)?;
    dataset.save(&out_dir.join(DATASET_FILE)).stage(Stage::Write)?;
    clock.lap(Stage::Synthesize, progress);

    let (gmm, fit) = GaussianMixture::fit_em(&dataset.rows, &cfg.gmm, &mut seeds.stream("gmm")).stage(Stage::Fit)?;
    gmm.save(&out_dir.join(GMM_FILE)).stage(Stage::Fit)?;
    let gmm_summary = GmmSummary {
        n_components: gmm.n_components(),
        iterations: fit.iterations,
        reg: fit.reg,
        log_likelihood: fit.log_likelihood,
    };
    clock.lap(Stage::Fit, progress);

    let arch = FfnArch::sample(spec.domain.dim(), &cfg.network.heads, &mut seeds.stream("arch")).stage(Stage::Network)?;
    let path = out_dir.join(ARCH_FILE);
    std::fs::write(&path, arch.to_json().stage(Stage::Network)?).map_err(io_err(&path))?;
    let posterior = Posterior::new(gmm, spec, &layout, arch.clone())
        .and_then(|p| p.with_prior_std(cfg.network.prior_std))
        .stage(Stage::Network)?;
    let theta_prior = arch.prior_sample(&mut seeds.stream("init")).theta;
    clock.lap(Stage::Network, progress);

    let (theta0, map) = if cfg.map.iterations > 0 {
        let from: Vec<f64> = theta_prior.iter().map(|v| v * cfg.map.init_scale).collect();
        let start = posterior.log_post(&from).stage(Stage::Map)?;
        let (theta, lp) = map_estimate(&posterior, &from, &cfg.map).stage(Stage::Map)?;
        let summary = MapSummary {
            iterations: cfg.map.iterations,
            log_post_start: start,
            log_post: lp,
        };
        (theta, Some(summary))
    } else {
        (theta_prior, None)
    };
    let stability = hmc::curvature(&posterior, &theta0, 30).stage(Stage::Map)?;
    let path = out_dir.join(STABILITY_FILE);
    let text = serde_json::to_string_pretty(&stability).expect("curvature serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    clock.lap(Stage::Map, progress);

    let hmc_cfg = HmcConfig {
        burn_in: cfg.hmc.burn_in,
        n_samples: cfg.hmc.n_samples,
        leapfrog_steps: cfg.hmc.leapfrog_steps,
        step_size: cfg.hmc.step_size,
        seed: seeds.stream("hmc").seed(),
    };
    let chain = hmc::sample(&posterior, &hmc_cfg, &theta0).stage(Stage::Sample)?;
    chain.save(&out_dir.join(CHAIN_FILE)).stage(Stage::Write)?;
    clock.lap(Stage::Sample, progress);

    let mut summary = summarize(cfg, out_dir, &arch, &chain, &mut clock, progress)?;
    summary.dims.n_snapshots = dataset.n_snapshots();
    summary.dims.sensor_vector = dataset.row_len();
    summary.gmm = gmm_summary;
    summary.map = map;
    summary.stability = Some(stability);
    write_summary(out_dir, &mut summary, &clock)?;
    Ok(summary)
}

/// Re-estimates statistics from the chain checkpoint of a finished run,
/// without resampling.
pub fn reestimate(run_dir: &Path) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
    let previous = RunSummary::load(run_dir)?;
    let path = run_dir.join(ARCH_FILE);
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingArtifacts(path.clone()))?;
    let arch = FfnArch::from_json(&text).stage(Stage::Estimate)?;
    let path = run_dir.join(CHAIN_FILE);
    if !path.exists() {
        return Err(CliError::MissingArtifacts(path));
    }
    let chain = HmcChain::load(&path).stage(Stage::Estimate)?;
    let mut clock = Clock::new();
    let mut summary = summarize(&cfg, run_dir, &arch, &chain, &mut clock, &mut |_, _| {})?;
    summary.dims = Dims {
        eval_points: summary.dims.eval_points,
        ..previous.dims
    };
    summary.gmm = previous.gmm;
    summary.map = previous.map;
    summary.stability = previous.stability;
    summary.timing.wall_time_per_sample = previous.timing.wall_time_per_sample;
    write_summary(run_dir, &mut summary, &clock)?;
    Ok(summary)
}

fn write_summary(out_dir: &Path, summary: &mut RunSummary, clock: &Clock) -> Result<()> {
    summary.timing.stages = clock.stages.clone();
    summary.timing.total = clock.start.elapsed().as_secs_f64();
    let path = out_dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn synthesize(cfg: &ExperimentConfig, seeds: &Seeds) -> Result<SnapshotDataset> {
    let layout = cfg.layout()?;
    let mut rng = seeds.stream("data");
    let n = cfg.data.n_snapshots;
    match cfg.problem.mode {
        Mode::Forward => synthesize_forward(&cfg.problem, &layout, n, &mut rng),
        Mode::Inverse => FdSolver::for_problem(&cfg.problem, cfg.data.solver_grid)
            .and_then(|solver| synthesize_inverse(&cfg.problem, &layout, n, &mut rng, &solver)),
    }
    .stage(Stage::Synthesize)
}

/// Estimation, reference and comparison stages shared by [`run`] and
/// [`reestimate`]. Fields owned by earlier stages are left at defaults.
fn summarize(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    arch: &FfnArch,
    chain: &HmcChain,
    clock: &mut Clock,
    progress: &mut dyn FnMut(Stage, f64),
) -> Result<RunSummary> {
    let spec = &cfg.problem;
    let diag = hmc::diagnostics(chain).stage(Stage::Sample)?;
    let grid = cfg.eval_grid();
    let fs = field_samples(&chain.samples, arch, spec, &grid, cfg.eval.field).stage(Stage::Estimate)?;
    let (mean, std) = mean_std(&fs);
    write_stats_csv(&out_dir.join(FIELD_STATS_FILE), &grid, &mean, &std).stage(Stage::Write)?;
    clock.lap(Stage::Estimate, progress);

    let reference = reference_stats(cfg, &Seeds::new(cfg.seed))?;
    reference.write_csv(&out_dir.join(REFERENCE_FILE)).stage(Stage::Write)?;
    let (ref_mean, ref_std) = reference_on(cfg, &reference, &grid)?;
    write_stats_csv(&out_dir.join(REFERENCE_ON_GRID_FILE), &grid, &ref_mean, &ref_std).stage(Stage::Write)?;
    clock.lap(Stage::Reference, progress);

    let errors = compare(cfg, &grid, &mean, &std, &ref_mean, &ref_std)?;
    let counts = running_counts(chain.samples.len(), cfg.eval.running_points);
    let trace = running_errors(&fs, &ref_mean, &ref_std, &counts).stage(Stage::Compare)?;
    write_running_errors(&out_dir.join(RUNNING_ERRORS_FILE), &trace)?;
    let kernel = match &cfg.eval.kernel {
        Some(_) => Some(kernel_comparison(cfg, out_dir, arch, chain, &grid)?),
        None => None,
    };
    let kl_kernel = kl_kernel(cfg);
    let kl_dimension = if cfg.eval.kl_grid > 0 && spec.domain.dim() == 1 {
        Some(kl_dimension(&kl_kernel, spec.domain.bounds(), cfg.eval.kl_grid, cfg.eval.kl_energy).stage(Stage::Compare)?)
    } else {
        None
    };
    clock.lap(Stage::Compare, progress);

    Ok(RunSummary {
        preset: cfg.preset.name().to_string(),
        scale: cfg.scale.name().to_string(),
        seed: cfg.seed,
        dims: Dims {
            theta: arch.dim_theta(),
            sensor_vector: 0,
            n_snapshots: 0,
            eval_points: grid.len(),
        },
        correlation_length: kl_kernel.length,
        kl_dimension,
        gmm: GmmSummary {
            n_components: 0,
            iterations: 0,
            reg: 0.0,
            log_likelihood: 0.0,
        },
        map: None,
        stability: None,
        hmc: HmcSummary {
            burn_in: chain.burn_in,
            n_samples: chain.samples.len(),
            leapfrog_steps: cfg.hmc.leapfrog_steps,
            step_size: cfg.hmc.step_size,
            acceptance_rate: diag.acceptance_rate,
            mean_abs_dh: diag.mean_abs_dh,
            max_abs_dh: diag.max_abs_dh,
            min_ess: diag.min_ess,
            degenerate: diag.degenerate,
        },
        errors,
        reference: ReferenceSummary {
            kind: cfg.reference.kind,
            n_mc: reference.n_mc,
            grid_points: reference.grid.len(),
            max_std_error: if reference.n_mc > 0 {
                reference.std_error().into_iter().fold(0.0, f64::max)
            } else {
                0.0
            },
        },
        kernel,
        timing: Timing {
            stages: BTreeMap::new(),
            total: 0.0,
            wall_time_per_sample: chain.wall_time_per_sample,
        },
    })
}

/// Kernel of the random input that controls the problem's dimension: `k`
/// for inverse problems, `f` otherwise.
fn kl_kernel(cfg: &ExperimentConfig) -> Kernel {
    match (&cfg.problem.mode, &cfg.problem.k_spec) {
        (Mode::Inverse, Some(k)) => k.kernel,
        _ => cfg.problem.f_spec.kernel,
    }
}

/// Reference statistics for `eval.field` on their native grid.
pub fn reference_stats(cfg: &ExperimentConfig, seeds: &Seeds) -> Result<ReferenceStats> {
    cfg.validate()?;
    match cfg.reference.kind {
        ReferenceKind::Analytic => {
            let gp = cfg.analytic_process().expect("checked by validate");
            Ok(analytic_reference(gp, &cfg.eval_grid()))
        }
        ReferenceKind::MonteCarlo => {
            let solver = FdSolver::for_problem(&cfg.problem, cfg.reference.grid).stage(Stage::Reference)?;
            let opts = McOptions {
                boundary_noise: cfg.reference.boundary_noise,
                cov_indices: None,
            };
            mc_reference(&cfg.problem, &solver, cfg.reference.n_mc, &mut seeds.stream("reference"), &opts)
                .stage(Stage::Reference)
        }
    }
}

/// Reference mean and STD interpolated onto `grid`.
fn reference_on(cfg: &ExperimentConfig, r: &ReferenceStats, grid: &PointSet) -> Result<(Vec<f64>, Vec<f64>)> {
    if r.grid == *grid {
        return Ok((r.mean.clone(), r.std.clone()));
    }
    match grid.dim() {
        1 => r.at_1d(grid).stage(Stage::Reference),
        _ => {
            let (a, b) = cfg.problem.domain.bounds();
            let g = Grid2D::new(a, b, cfg.reference.grid).stage(Stage::Reference)?;
            Ok((
                grid.iter().map(|x| g.interpolate(&r.mean, x)).collect(),
                grid.iter().map(|x| g.interpolate(&r.std, x)).collect(),
            ))
        }
    }
}

fn compare(
    cfg: &ExperimentConfig,
    grid: &PointSet,
    mean: &[f64],
    std: &[f64],
    ref_mean: &[f64],
    ref_std: &[f64],
) -> Result<ErrorSummary> {
    let boundary: Vec<bool> = grid.iter().map(|x| cfg.problem.domain.on_boundary(x)).collect();
    let pick = |v: &[f64], keep: bool| -> Vec<f64> {
        v.iter().zip(&boundary).filter(|(_, &b)| b != keep).map(|(x, _)| *x).collect()
    };
    let boundary_std = boundary.iter().any(|&b| b).then(|| {
        let s = pick(std, false);
        BoundaryStd {
            min: s.iter().copied().fold(f64::INFINITY, f64::min),
            max: s.iter().copied().fold(0.0, f64::max),
        }
    });
    Ok(ErrorSummary {
        mean: rel_error(mean, ref_mean).stage(Stage::Compare)?,
        std: rel_error(std, ref_std).stage(Stage::Compare)?,
        std_interior: rel_error(&pick(std, true), &pick(ref_std, true)).stage(Stage::Compare)?,
        boundary_std,
    })
}

/// About `points` log-spaced sample counts from `min(10, n)` to `n`.
pub fn running_counts(n: usize, points: usize) -> Vec<usize> {
    let lo = n.min(10).max(1) as f64;
    let hi = n as f64;
    let mut counts: Vec<usize> = (0..points)
        .map(|i| {
            let t = if points > 1 { i as f64 / (points - 1) as f64 } else { 1.0 };
            (lo * (hi / lo).powf(t)).round() as usize
        })
        .collect();
    counts.push(n);
    counts.sort_unstable();
    counts.dedup();
    counts
}

fn write_running_errors(path: &Path, trace: &[(usize, f64, f64)]) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "n,mean_error,std_error")?;
        for (n, m, s) in trace {
            writeln!(w, "{n},{m:?},{s:?}")?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

fn kernel_comparison(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    arch: &FfnArch,
    chain: &HmcChain,
    grid: &PointSet,
) -> Result<KernelSummary> {
    let kc = cfg.eval.kernel.as_ref().expect("caller checked");
    let mut fs = field_samples(&chain.samples, arch, &cfg.problem, grid, kc.field).stage(Stage::Compare)?;
    if let Some(shift) = kc.log_shift {
        fs = log_shifted(fs, shift)?;
    }
    let predicted = cov_kernel(&fs);
    let spec = match kc.against {
        KernelSource::F => cfg.problem.f_spec,
        KernelSource::K => *cfg.problem.k_spec.as_ref().expect("checked by validate"),
    };
    let exact = match kc.log_shift {
        Some(_) => gram(&spec.kernel, grid),
        None => SymMatrix::from_fn(grid.len(), |i, j| spec.analytic_cov(grid.point(i), grid.point(j))),
    };
    write_matrix_csv(&out_dir.join(KERNEL_PRED_FILE), &predicted).stage(Stage::Write)?;
    write_matrix_csv(&out_dir.join(KERNEL_EXACT_FILE), &exact).stage(Stage::Write)?;
    let pe = kernel_eigenvalues(&predicted).stage(Stage::Compare)?;
    let ee = kernel_eigenvalues(&exact).stage(Stage::Compare)?;
    let path = out_dir.join(EIGENVALUES_FILE);
    let write = || -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "index,predicted,exact")?;
        for (i, (p, e)) in pe.iter().zip(&ee).enumerate() {
            writeln!(w, "{i},{p:?},{e:?}")?;
        }
        w.flush()
    };
    write().map_err(io_err(&path))?;
    let n = kc.n_eigenvalues.min(pe.len());
    let max_eigenvalue_rel_error = pe[..n]
        .iter()
        .zip(&ee[..n])
        .map(|(p, e)| (p - e).abs() / e.abs())
        .fold(0.0, f64::max);
    Ok(KernelSummary {
        field: kc.field,
        rel_error: rel_error_matrix(&predicted, &exact).stage(Stage::Compare)?,
        predicted_eigenvalues: pe[..n].to_vec(),
        exact_eigenvalues: ee[..n].to_vec(),
        max_eigenvalue_rel_error,
    })
}

fn log_shifted(fs: FieldSamples, shift: f64) -> Result<FieldSamples> {
    let values = fs.values.as_slice();
    if let Some(v) = values.iter().find(|&&v| !(v > shift)) {
        return Err(CliError::Stage {
            stage: Stage::Compare,
            source: spdebnn_core::Error::Invalid {
                what: "eval.kernel.log_shift".into(),
                reason: format!("sample value {v} is not above the shift {shift}"),
            },
        });
    }
    let values = Matrix::from_vec(
        fs.values.rows(),
        fs.values.cols(),
        values.iter().map(|v| (v - shift).ln()).collect(),
    )
    .stage(Stage::Compare)?;
    Ok(FieldSamples { grid: fs.grid, values })
}

/// Default run directory: `<root>/<preset>-<scale>-seed<seed>`, where the
/// root comes from `SPDEBNN_OUTPUT_ROOT` or defaults to `runs`.
pub fn default_output_dir(cfg: &ExperimentConfig, root: Option<PathBuf>) -> PathBuf {
    let root = root.unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{}-{}-seed{}", cfg.preset.name(), cfg.scale.name(), cfg.seed))
}
